#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "moco/errors.hpp"

namespace moco {

struct UTestResult {
  double u_statistic = 0.0; // min(U1, U2)
  double p_value = 1.0;     // two-sided, in (0, 1]
  std::string method;       // "exact" or "normal_approx"
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

/// Mann-Whitney U with midrank tie handling. U = min(U1, U2). Two-sided p is
/// exact (full enumeration of group assignments) when n1+n2 <= 16, otherwise a
/// tie-corrected normal approximation with continuity correction.
/// Throws ValidationError on empty samples.
UTestResult mann_whitney_u(const std::vector<double> &a, const std::vector<double> &b);

/// Percent speedup of `patched` over `base`, credited only when the U test is
/// significant at `alpha` AND mean(patched) < mean(base); otherwise 0.
/// Requires >= 2 samples each and a positive base mean.
double significant_gain(const std::vector<double> &base,
                        const std::vector<double> &patched, double alpha = 0.1);

struct ForestParams {
  std::size_t n_trees = 200;
  std::size_t max_features = 0; // 0 = ceil(p/3)
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;
};

struct ImportanceReport {
  std::string objective;
  std::map<std::string, double> importances;
  ForestParams forest_params;
  std::size_t sample_count = 0;

  std::string to_json() const;
};

/// Regression forest of CART trees: variance-reduction splits with exhaustive
/// threshold search over midpoints of sorted unique values, bootstrap samples
/// of the training size, `max_features` random candidate features per split.
/// Deterministic given the seed; per-tree streams derive from (seed, index).
class RegressionForest {
public:
  RegressionForest(const std::vector<std::vector<double>> &features,
                   const std::vector<double> &targets, ForestParams params);

  double predict(const std::vector<double> &x) const;

  /// Mean decrease in impurity per feature, normalized to sum to 1 (all zero
  /// when no tree ever split).
  std::vector<double> feature_importance() const;

  const ForestParams &params() const { return params_; }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_samples() const { return n_samples_; }

private:
  struct Node {
    int feature = -1; // -1 for leaves
    double threshold = 0.0;
    double value = 0.0; // leaf prediction
    int left = -1;
    int right = -1;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<double> importance; // impurity decrease per feature, unnormalized
  };

  Tree build_tree(const std::vector<std::vector<double>> &rows,
                  const std::vector<double> &ys, std::mt19937_64 &rng) const;

  ForestParams params_;
  std::size_t n_features_ = 0;
  std::size_t n_samples_ = 0;
  std::vector<Tree> trees_;
};

} // namespace moco
