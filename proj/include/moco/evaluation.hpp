#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "moco/errors.hpp"
#include "moco/search_space.hpp"

namespace moco {

/// The three objectives with their natural directions: correctness and
/// performance gain are maximized, agent runtime is minimized.
struct ObjectiveVector {
  double correctness = 0.0;   // fraction of instances passing all tests, [0,1]
  double perf_gain_pct = 0.0; // percent speedup, >= 0
  double runtime_s = 0.0;     // agent wall-clock seconds, > 0

  /// (-correctness, -perf_gain, runtime): the form every sorting routine uses.
  std::array<double, 3> to_minimization() const {
    return {-correctness, -perf_gain_pct, runtime_s};
  }
  static ObjectiveVector from_minimization(const std::array<double, 3> &m) {
    return {-m[0], -m[1], m[2]};
  }
  bool operator==(const ObjectiveVector &) const = default;
};

/// Outcome of running the agent on one benchmark instance. The runtime lists
/// hold repeated measurements of the unpatched and patched code; both are
/// absent for replayed aggregate-only results.
struct InstanceResult {
  std::string instance_id;
  bool passed = false;
  double agent_runtime_s = 0.0;
  std::optional<std::vector<double>> base_runtimes_s;
  std::optional<std::vector<double>> patched_runtimes_s;
};

enum class EvalStatus { ok, failed };

std::string to_string(EvalStatus s);
EvalStatus eval_status_from_string(const std::string &s);

/// One evaluated configuration with provenance.
struct EvaluationRecord {
  Configuration config;
  ObjectiveVector objectives;
  std::vector<InstanceResult> per_instance;
  int generation = 0; // -1 for injected baselines
  double wall_time_s = 0.0;
  EvalStatus status = EvalStatus::ok;
  std::string evaluator;
  std::optional<std::string> label;

  /// (passed, total) when per-instance detail exists, for "k/N" rendering.
  std::optional<std::pair<std::size_t, std::size_t>> pass_counts() const;
};

/// Objective aggregation: correctness = passed/N, runtime = mean agent
/// runtime, perf gain = mean over all instances of the per-instance gated
/// gain (zero unless the instance passed, the U test gives p < 0.1, and the
/// patched mean is faster). Throws on empty input or malformed runtime lists.
ObjectiveVector aggregate(const std::vector<InstanceResult> &results);

/// What an evaluator hands back: per-instance results, plus an optional
/// aggregate override for replayed rows that only carry aggregate objectives.
/// wall_time_s stays 0 for deterministic evaluators so reruns are
/// byte-identical; the external evaluator reports measured seconds.
struct EvalOutput {
  std::vector<InstanceResult> results;
  std::optional<ObjectiveVector> aggregate_override;
  std::optional<std::string> trace_label;
  double wall_time_s = 0.0;
};

/// Contract every evaluation backend satisfies. `evaluate` may throw; the
/// optimization loop converts failures into penalty records and keeps going.
class Evaluator {
public:
  virtual ~Evaluator() = default;
  virtual EvalOutput evaluate(const Configuration &config,
                              const std::vector<std::string> &instances) = 0;
  virtual bool concurrent_safe() const = 0;
  virtual std::string label() const = 0;
};

/// Deterministic closed-form agent model over the standard space. Runtime is
/// linear in step limit, timeouts and max tokens; solution quality peaks at
/// temperature 0.65, top_p 0.4, template "3". Out-of-space or missing values
/// are clamped into the standard space first. Pure function of the config.
class SyntheticEvaluator : public Evaluator {
public:
  EvalOutput evaluate(const Configuration &config,
                      const std::vector<std::string> &instances) override;
  bool concurrent_safe() const override { return true; }
  std::string label() const override { return "synthetic"; }
};

/// Quality score of the synthetic model for a (clamped) configuration.
double synthetic_quality(const Configuration &config);
/// Agent runtime of the synthetic model for a (clamped) configuration.
double synthetic_runtime_s(const Configuration &config);

/// One stored row of a replay trace.
struct TraceRow {
  std::string trace_label;
  Configuration config;
  std::optional<ObjectiveVector> objectives; // aggregate-only rows
  std::vector<InstanceResult> results;
};

/// Recorded evaluations keyed by configuration id (and row label). Returns
/// stored results verbatim; never fabricates measurements.
class ReplayTrace {
public:
  static ReplayTrace load(const std::string &path, const ConfigSpace &space);
  static ReplayTrace parse(const std::string &text, const ConfigSpace &space);

  const std::vector<TraceRow> &rows() const { return rows_; }
  const TraceRow *find_by_id(const std::string &config_id) const;
  const TraceRow *find_by_label(const std::string &trace_label) const;

private:
  std::vector<TraceRow> rows_;
};

class ReplayEvaluator : public Evaluator {
public:
  explicit ReplayEvaluator(ReplayTrace trace) : trace_(std::move(trace)) {}

  /// Throws TraceError when the configuration id is not in the trace.
  EvalOutput evaluate(const Configuration &config,
                      const std::vector<std::string> &instances) override;
  bool concurrent_safe() const override { return true; }
  std::string label() const override { return "replay"; }

  const ReplayTrace &trace() const { return trace_; }

private:
  ReplayTrace trace_;
};

/// Bridges to an external agent harness: spawns `command` through /bin/sh
/// once per evaluation, writes {"config":…, "instances":…} JSON to its stdin
/// and parses {"results":[…]} from its stdout. Nonzero exit, malformed JSON,
/// broken invariants or a timeout raise ProtocolError.
class ExternalEvaluator : public Evaluator {
public:
  ExternalEvaluator(std::string command, const ConfigSpace &space,
                    double timeout_s = 600.0, bool concurrent_safe = false);

  EvalOutput evaluate(const Configuration &config,
                      const std::vector<std::string> &instances) override;
  bool concurrent_safe() const override { return concurrent_safe_; }
  std::string label() const override { return "external"; }

private:
  std::string command_;
  ConfigSpace space_;
  double timeout_s_;
  bool concurrent_safe_;
};

} // namespace moco
