#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "moco/errors.hpp"

namespace moco {

/// NSGA-II knobs. mutation_probability left unset means 1/n_vars, resolved
/// against the space dimension at run time.
struct GAParams {
  int population_size = 5;
  int generations = 5;
  double crossover_probability = 0.9;
  double crossover_eta = 15.0;
  std::optional<double> mutation_probability;
  double mutation_eta = 20.0;
  std::uint64_t seed = 0;

  double effective_mutation_probability(std::size_t n_vars) const;

  /// Throws ValidationError on out-of-range fields (population_size >= 2,
  /// generations >= 1, probabilities in [0,1], positive etas).
  void check() const;

  std::string to_json() const;
  static GAParams from_json(const std::string &text);

  bool operator==(const GAParams &) const = default;
};

} // namespace moco
