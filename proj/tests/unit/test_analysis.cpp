#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "moco/analysis.hpp"

using namespace moco;

namespace {

/// Full-enumeration oracle for the exact two-sided Mann-Whitney p-value:
/// every assignment of the pooled values into a group of size n1, U computed
/// by direct pairwise comparison with half-credit ties.
double pairwise_u1(const std::vector<double> &a, const std::vector<double> &b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) {
      if (x > y) u += 1.0;
      else if (x == y) u += 0.5;
    }
  return u;
}

double exact_p_oracle(const std::vector<double> &a, const std::vector<double> &b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), n1 = a.size();
  const double n1n2 = static_cast<double>(n1) * static_cast<double>(n - n1);
  const double observed = std::min(pairwise_u1(a, b), n1n2 - pairwise_u1(a, b));

  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + n1, true);
  std::sort(mask.begin(), mask.end()); // lexicographically first arrangement
  long long total = 0, at_most = 0;
  do {
    std::vector<double> ga, gb;
    for (std::size_t i = 0; i < n; ++i)
      (mask[i] ? ga : gb).push_back(pooled[i]);
    const double u1 = pairwise_u1(ga, gb);
    const double u = std::min(u1, n1n2 - u1);
    ++total;
    if (u <= observed + 1e-12) ++at_most;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return static_cast<double>(at_most) / static_cast<double>(total);
}

} // namespace

TEST_CASE("Mann-Whitney worked example: a=(1,2,3), b=(4,5,6)") {
  const UTestResult res = mann_whitney_u({1, 2, 3}, {4, 5, 6});
  CHECK(res.u_statistic == 0.0);
  CHECK(res.p_value == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(res.method == "exact");
  CHECK(res.n1 == 3);
  CHECK(res.n2 == 3);
}

TEST_CASE("Mann-Whitney on fully tied samples gives p = 1") {
  const UTestResult res = mann_whitney_u({5, 5, 5}, {5, 5, 5});
  CHECK(res.p_value == 1.0);
  CHECK(res.u_statistic == doctest::Approx(4.5)); // n1*n2/2 with total ties
}

TEST_CASE("Mann-Whitney rejects empty samples") {
  CHECK_THROWS_AS(mann_whitney_u({}, {1.0}), ValidationError);
  CHECK_THROWS_AS(mann_whitney_u({1.0}, {}), ValidationError);
}

TEST_CASE("Mann-Whitney is symmetric in its arguments") {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> value(0, 6);
  std::uniform_int_distribution<int> size(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(size(rng)), b(size(rng));
    for (auto &x : a) x = value(rng);
    for (auto &x : b) x = value(rng);
    const UTestResult fwd = mann_whitney_u(a, b);
    const UTestResult rev = mann_whitney_u(b, a);
    CHECK(fwd.u_statistic == rev.u_statistic);
    CHECK(fwd.p_value == rev.p_value);
  }
}

TEST_CASE("exact p matches full enumeration for all n1+n2 <= 10") {
  std::mt19937_64 rng(8128);
  std::uniform_int_distribution<int> value(0, 5); // small range forces ties
  int datasets = 0;
  while (datasets < 100) {
    for (std::size_t n1 = 1; n1 <= 9 && datasets < 100; ++n1) {
      for (std::size_t n2 = 1; n1 + n2 <= 10 && datasets < 100; ++n2) {
        std::vector<double> a(n1), b(n2);
        for (auto &x : a) x = value(rng);
        for (auto &x : b) x = value(rng);
        const UTestResult res = mann_whitney_u(a, b);
        REQUIRE(res.method == "exact");
        const double expected = exact_p_oracle(a, b);
        CHECK(res.p_value == doctest::Approx(expected).epsilon(1e-12));
        CHECK(res.u_statistic <= static_cast<double>(n1 * n2) / 2.0);
        CHECK(res.u_statistic >= 0.0);
        ++datasets;
      }
    }
  }
}

TEST_CASE("method switches to the normal approximation past n1+n2 = 16") {
  std::vector<double> a(8, 1.0), b(8, 2.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += 0.01 * i;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += 0.01 * i;
  CHECK(mann_whitney_u(a, b).method == "exact");

  b.push_back(3.0); // n1+n2 = 17
  const UTestResult approx = mann_whitney_u(a, b);
  CHECK(approx.method == "normal_approx");
  CHECK(approx.p_value > 0.0);
  CHECK(approx.p_value <= 1.0);
}

TEST_CASE("normal approximation tracks the enumerated p on the same data") {
  // n1+n2 = 17 forces the approximation; the oracle still enumerates. At
  // these sizes the continuity-corrected approximation stays within a few
  // percent of the exact tail.
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> a(8), b(9);
    for (auto &x : a) x = unit(rng);
    for (auto &x : b) x = 0.3 + unit(rng);
    const UTestResult res = mann_whitney_u(a, b);
    CHECK(res.method == "normal_approx");
    CHECK(std::abs(res.p_value - exact_p_oracle(a, b)) < 0.05);
  }
}

TEST_CASE("the synthetic evaluator's jittered pattern passes the gate") {
  // 20 base measurements of 10.0 vs a 2% faster patched pattern with the
  // alternating 0.001k jitter: the gate must fire (p < 0.1).
  std::vector<double> base(20, 10.0), patched(20);
  for (int k = 1; k <= 20; ++k)
    patched[k - 1] = 9.8 + (k % 2 == 1 ? 1.0 : -1.0) * 0.001 * k;
  const UTestResult res = mann_whitney_u(base, patched);
  CHECK(res.method == "normal_approx");
  CHECK(res.p_value < 0.1);
}

TEST_CASE("significant_gain applies the directional gate") {
  // Clearly separated samples with means exactly 10 and 9: p = 2/C(8,4) < 0.1.
  const std::vector<double> base{9.9, 10.1, 9.95, 10.05};
  const std::vector<double> patched{8.9, 9.1, 8.95, 9.05};
  CHECK(significant_gain(base, patched, 0.1) == doctest::Approx(10.0).epsilon(1e-12));

  // Identical samples: no gain.
  CHECK(significant_gain(base, base, 0.1) == 0.0);

  // Significantly slower: gated to zero despite a small p.
  CHECK(significant_gain(patched, base, 0.1) == 0.0);

  // p >= alpha: n1 = n2 = 3 can reach at best p = 0.1, never < 0.1.
  CHECK(significant_gain({10.0, 10.1, 9.9}, {9.0, 9.1, 8.9}, 0.1) == 0.0);

  CHECK_THROWS_AS(significant_gain({10.0}, {9.0, 9.1}, 0.1), ValidationError);
  CHECK_THROWS_AS(significant_gain({0.0, 0.0}, {1.0, 1.0}, 0.1), ValidationError);
}

TEST_CASE("forest recovers a single informative feature") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = 200, p = 5;
  std::vector<std::vector<double>> features(n, std::vector<double>(p));
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto &x : features[i]) x = unit(rng);
    targets[i] = features[i][1] + 0.01 * unit(rng); // y = x_1 + small noise
  }

  ForestParams params;
  params.seed = 9;
  RegressionForest forest(features, targets, params);
  const auto importance = forest.feature_importance();
  REQUIRE(importance.size() == p);
  CHECK(importance[1] > 0.6);
  CHECK(std::accumulate(importance.begin(), importance.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-9));
  for (double imp : importance) CHECK(imp >= 0.0);

  // Training error far below the target variance.
  double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double variance = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    variance += (targets[i] - mean) * (targets[i] - mean);
    const double err = forest.predict(features[i]) - targets[i];
    mse += err * err;
  }
  variance /= n;
  mse /= n;
  CHECK(mse < variance / 10.0);
}

TEST_CASE("constant targets produce all-zero importances and leaf-only trees") {
  std::vector<std::vector<double>> features{{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  std::vector<double> targets{3.5, 3.5, 3.5, 3.5};
  ForestParams params;
  RegressionForest forest(features, targets, params);
  for (double imp : forest.feature_importance()) CHECK(imp == 0.0);
  CHECK(forest.predict({2, 3}) == 3.5);
}

TEST_CASE("forest is deterministic per seed and sensitive to it") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> features(40, std::vector<double>(3));
  std::vector<double> targets(40);
  for (std::size_t i = 0; i < 40; ++i) {
    for (auto &x : features[i]) x = unit(rng);
    targets[i] = 2.0 * features[i][0] - features[i][2];
  }
  ForestParams params;
  params.seed = 77;
  params.n_trees = 50;
  const auto imp_a = RegressionForest(features, targets, params).feature_importance();
  const auto imp_b = RegressionForest(features, targets, params).feature_importance();
  CHECK(imp_a == imp_b);
}

TEST_CASE("importances depend only on the multiset of samples") {
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> features(30, std::vector<double>(3));
  std::vector<double> targets(30);
  for (std::size_t i = 0; i < 30; ++i) {
    for (auto &x : features[i]) x = unit(rng);
    targets[i] = features[i][0];
  }
  ForestParams params;
  params.seed = 5;
  params.n_trees = 30;
  const RegressionForest original(features, targets, params);

  // Permute sample order; the canonicalized bootstrap makes this a no-op.
  std::vector<std::size_t> order(30);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<double>> shuffled_features;
  std::vector<double> shuffled_targets;
  for (std::size_t idx : order) {
    shuffled_features.push_back(features[idx]);
    shuffled_targets.push_back(targets[idx]);
  }
  const RegressionForest shuffled(shuffled_features, shuffled_targets, params);
  CHECK(original.feature_importance() == shuffled.feature_importance());
  const std::vector<double> probe{0.4, 0.6, 0.1};
  CHECK(original.predict(probe) == shuffled.predict(probe));
}

TEST_CASE("forest rejects degenerate inputs and applies defaults") {
  ForestParams params;
  CHECK(params.n_trees == 200);
  CHECK(params.max_features == 0); // 0 means ceil(p/3)
  CHECK(params.min_samples_leaf == 1);
  CHECK_THROWS_AS(RegressionForest({{1.0}}, {1.0}, params), ValidationError);
  CHECK_THROWS_AS(RegressionForest({{1.0}, {2.0}}, {1.0}, params), ValidationError);
  CHECK_THROWS_AS(RegressionForest({{1.0}, {2.0, 3.0}}, {1.0, 2.0}, params),
                  ValidationError);
}

TEST_CASE("importance report serializes with forest parameters") {
  ImportanceReport report;
  report.objective = "runtime";
  report.importances = {{"alpha", 0.75}, {"beta", 0.25}};
  report.forest_params.seed = 3;
  report.sample_count = 25;
  const std::string json = report.to_json();
  CHECK(json.find("\"runtime\"") != std::string::npos);
  CHECK(json.find("alpha") != std::string::npos);
  CHECK(json.find("mean_decrease_in_impurity") != std::string::npos);
  CHECK(json.find("\"sample_count\":25") != std::string::npos);
}
