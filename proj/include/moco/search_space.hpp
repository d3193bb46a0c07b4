#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "moco/errors.hpp"

namespace moco {

enum class ParamKind { continuous, integer, categorical };

std::string to_string(ParamKind kind);
ParamKind param_kind_from_string(const std::string &s);

/// One tunable hyperparameter: box bounds for continuous/integer,
/// an ordered label list for categorical.
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::continuous;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::string> categories; // categorical only
  std::string unit;                    // free-text annotation, e.g. "seconds"

  std::size_t category_count() const { return categories.size(); }
};

/// Ordered list of parameters; the order fixes the genome dimension and the
/// canonical field order everywhere (serialization, hashing, feature matrices).
class ConfigSpace {
public:
  ConfigSpace() = default;
  explicit ConfigSpace(std::vector<ParamSpec> params);

  std::size_t n_vars() const { return params_.size(); }
  const std::vector<ParamSpec> &params() const { return params_; }
  const ParamSpec &param(std::size_t i) const { return params_.at(i); }
  const ParamSpec *find(const std::string &name) const;

  /// Stable content hash of the space definition, used to detect ledger/space
  /// mismatches on resume.
  std::string content_hash() const;

  std::string to_json() const;
  static ConfigSpace from_json(const std::string &text);

private:
  std::vector<ParamSpec> params_;
};

/// A parameter value: double for continuous, int64 for integer,
/// label string for categorical.
using ParamValue = std::variant<double, std::int64_t, std::string>;

std::string render_value(const ParamValue &v);

/// One concrete assignment of hyperparameters. `id` is a content hash over the
/// ordered values (continuous rendered with 6 fractional digits), so equal
/// decoded values always share an id. Values may be missing or out of bounds
/// for explicitly out-of-space baselines.
struct Configuration {
  std::map<std::string, ParamValue> values;
  std::string id;

  const ParamValue *find(const std::string &name) const;
  std::optional<double> numeric(const std::string &name) const;
};

/// Builds a Configuration and computes its id against `space` ordering.
/// Throws ValidationError for parameter names the space does not define.
Configuration make_configuration(const ConfigSpace &space,
                                 std::map<std::string, ParamValue> values);

struct Violation {
  std::string param;
  std::string message;
};

struct ValidationResult {
  bool ok = true;
  std::vector<Violation> violations;
};

using Genome = std::vector<double>;

/// The 8-parameter standard space: temperature, top_p, max_tokens, step_limit,
/// cost_limit, env_timeout, llm_timeout, prompt_template.
ConfigSpace default_space();

/// Maps a genome in [0,1]^n to a concrete configuration. Continuous genes
/// scale linearly; integer genes scale, round half-up and clamp; categorical
/// genes pick bucket floor(g*k) clamped to k-1. Deterministic and total over
/// [0,1]^n. Throws ValidationError on dimension mismatch or genes outside [0,1].
Configuration decode(const Genome &genome, const ConfigSpace &space);

/// Inverse of decode up to quantization: continuous genes are
/// (v-lower)/(upper-lower); integer and categorical genes land at the midpoint
/// of their decode bucket, so decode(encode(c)) == c for any in-space c.
/// Throws ValidationError for missing or out-of-bounds values.
Genome encode(const Configuration &config, const ConfigSpace &space);

/// Checks `config` against `space`. In strict mode (baseline_mode=false) any
/// violation flips ok to false; in baseline mode violations are reported but
/// ok stays true, so out-of-space baselines can be carried through reporting.
ValidationResult validate(const Configuration &config, const ConfigSpace &space,
                          bool baseline_mode = false);

/// Uniform sample: each gene uniform in [0,1], then decoded.
Configuration random_config(const ConfigSpace &space, std::mt19937_64 &rng);
Genome random_genome(const ConfigSpace &space, std::mt19937_64 &rng);

std::string configuration_to_json(const Configuration &config,
                                  const ConfigSpace &space);
Configuration configuration_from_json(const std::string &text,
                                      const ConfigSpace &space);

} // namespace moco
