#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "moco/errors.hpp"
#include "moco/evaluation.hpp"

namespace moco {

/// Pareto dominance in natural directions: maximize correctness and perf
/// gain, minimize runtime. True iff `a` is at least as good everywhere and
/// strictly better somewhere.
bool dominates(const ObjectiveVector &a, const ObjectiveVector &b);

/// Same relation on generic minimization vectors (any dimension).
bool dominates_min(const std::vector<double> &a, const std::vector<double> &b);

/// Non-dominated subset of a record list. Indices refer to the input vector.
/// Records whose objectives exactly tie an earlier member are recorded as
/// duplicates, not members.
struct ParetoFront {
  std::vector<std::size_t> member_indices;
  std::vector<std::size_t> duplicate_indices;
  std::size_t extracted_from = 0;
};

ParetoFront pareto_front(const std::vector<EvaluationRecord> &records);

/// Per-objective (min, max) in raw orientation, used for normalization.
struct ObjectiveBounds {
  std::array<double, 3> min{0.0, 0.0, 0.0};
  std::array<double, 3> max{0.0, 0.0, 0.0};

  bool operator==(const ObjectiveBounds &) const = default;
};

ObjectiveBounds induce_bounds(const std::vector<ObjectiveVector> &vectors);

/// Min-max scaling to [0,1] in all-maximize form: runtime is inverted before
/// scaling. Zero-range objectives map to 1.0 for every vector.
std::array<double, 3> normalize_one(const ObjectiveVector &v, const ObjectiveBounds &b);
std::vector<std::array<double, 3>>
normalize(const std::vector<ObjectiveVector> &vectors,
          const std::optional<ObjectiveBounds> &bounds = std::nullopt);

/// Exact 3-D hypervolume of the union of boxes [reference, point], by
/// dimension sweep: sort on the third coordinate, accumulate 2-D staircase
/// area per slab. Every point must strictly dominate the reference.
double hypervolume3(const std::vector<std::array<double, 3>> &points,
                    const std::array<double, 3> &reference);

constexpr std::array<double, 3> kDefaultReference{-0.1, -0.1, -0.1};

struct HypervolumeReport {
  double raw_volume = 0.0;
  double percent = 0.0; // 100 * raw / full box volume above the reference
  double full_box_volume = 0.0;
  std::array<double, 3> reference_point = kDefaultReference;
  ObjectiveBounds normalization_bounds;
  std::size_t front_size = 0;

  std::string to_json() const;
};

/// Normalizes (inducing bounds over the inputs unless given) and measures the
/// set. Throws ValidationError on an empty input.
HypervolumeReport
hypervolume_report(const std::vector<ObjectiveVector> &vectors,
                   const std::optional<ObjectiveBounds> &bounds = std::nullopt,
                   const std::array<double, 3> &reference = kDefaultReference);

/// Renders correctness as "k/N" when per-instance counts exist, else the
/// bare ratio with 4 decimals.
std::string render_correctness(const EvaluationRecord &rec);

/// Front exports. `hv_percent` pairs with member_indices when supplied
/// (per-record single-point hypervolume under shared bounds).
std::string pareto_front_to_json(const ParetoFront &front,
                                 const std::vector<EvaluationRecord> &records,
                                 const ConfigSpace &space,
                                 const std::vector<double> *hv_percent = nullptr);
std::string pareto_front_to_csv(const ParetoFront &front,
                                const std::vector<EvaluationRecord> &records,
                                const ConfigSpace &space,
                                const std::vector<double> *hv_percent = nullptr);

} // namespace moco
