#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <json.hpp>

#include "moco/metrics.hpp"

using namespace moco;

namespace {

EvaluationRecord rec(double corr, double perf, double rt, const char *label = nullptr) {
  EvaluationRecord r;
  r.objectives = ObjectiveVector{corr, perf, rt};
  if (label) r.label = label;
  return r;
}

/// Exact union volume of boxes [reference, point] by inclusion-exclusion,
/// feasible for <= 6 points (2^6 subsets).
double union_volume_oracle(const std::vector<std::array<double, 3>> &pts,
                           const std::array<double, 3> &ref) {
  const std::size_t n = pts.size();
  double total = 0.0;
  for (std::size_t mask = 1; mask < (1u << n); ++mask) {
    std::array<double, 3> corner{1e300, 1e300, 1e300};
    int bits = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        ++bits;
        for (int k = 0; k < 3; ++k) corner[k] = std::min(corner[k], pts[i][k]);
      }
    double vol = 1.0;
    for (int k = 0; k < 3; ++k) vol *= std::max(0.0, corner[k] - ref[k]);
    total += (bits % 2 == 1 ? 1.0 : -1.0) * vol;
  }
  return total;
}

/// Midpoint grid estimate of the union volume over the bounding box
/// [ref, (1,1,1)] with cells^3 cells.
double grid_volume_oracle(const std::vector<std::array<double, 3>> &pts,
                          const std::array<double, 3> &ref, int cells) {
  std::array<double, 3> hi{1.0, 1.0, 1.0};
  for (const auto &p : pts)
    for (int k = 0; k < 3; ++k) hi[k] = std::max(hi[k], p[k]);
  std::array<double, 3> step;
  for (int k = 0; k < 3; ++k) step[k] = (hi[k] - ref[k]) / cells;

  long long covered = 0;
  for (int a = 0; a < cells; ++a)
    for (int b = 0; b < cells; ++b)
      for (int c = 0; c < cells; ++c) {
        const double x = ref[0] + (a + 0.5) * step[0];
        const double y = ref[1] + (b + 0.5) * step[1];
        const double z = ref[2] + (c + 0.5) * step[2];
        for (const auto &p : pts)
          if (p[0] >= x && p[1] >= y && p[2] >= z) {
            ++covered;
            break;
          }
      }
  return covered * step[0] * step[1] * step[2];
}

std::vector<std::array<double, 3>> random_points(std::mt19937_64 &rng, int n) {
  std::uniform_real_distribution<double> coord(0.05, 1.0);
  std::vector<std::array<double, 3>> pts(n);
  for (auto &p : pts)
    for (auto &x : p) x = coord(rng);
  return pts;
}

} // namespace

TEST_CASE("dominance on the reference-front worked cases") {
  const ObjectiveVector row5{8.0 / 9.0, 6.43, 984.8};
  const ObjectiveVector row16{0.0, 0.0, 853.3};
  const ObjectiveVector def{2.0 / 9.0, 0.0, 1513.3};

  CHECK(dominates(row5, def));
  CHECK_FALSE(dominates(row16, def)); // worse correctness
  CHECK_FALSE(dominates(def, row5));
  CHECK_FALSE(dominates(def, def)); // no strict improvement
}

TEST_CASE("dominance is irreflexive, asymmetric, transitive") {
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_vec = [&] {
    return ObjectiveVector{unit(rng), 20.0 * unit(rng), 500.0 + 1000.0 * unit(rng)};
  };
  for (int trial = 0; trial < 2000; ++trial) {
    const ObjectiveVector a = random_vec(), b = random_vec(), c = random_vec();
    CHECK_FALSE(dominates(a, a));
    if (dominates(a, b)) CHECK_FALSE(dominates(b, a));
    if (dominates(a, b) && dominates(b, c)) CHECK(dominates(a, c));
  }
}

TEST_CASE("pareto_front on the reference objectives keeps the five optimized rows") {
  const std::vector<EvaluationRecord> records{
      rec(2.0 / 9.0, 0.0, 1513.3, "default"), rec(4.0 / 9.0, 0.0, 943.1, "#4"),
      rec(8.0 / 9.0, 6.43, 984.8, "#5"),      rec(7.0 / 9.0, 0.0, 958.1, "#9"),
      rec(7.0 / 9.0, 10.67, 1400.1, "#15"),   rec(0.0, 0.0, 853.3, "#16"),
  };
  const ParetoFront front = pareto_front(records);
  CHECK(front.member_indices == std::vector<std::size_t>{1, 2, 3, 4, 5});
  CHECK(front.duplicate_indices.empty());
  CHECK(front.extracted_from == 6);
}

TEST_CASE("pareto_front basics: single record, dominance chain, duplicates") {
  CHECK(pareto_front({rec(0.5, 1.0, 100.0)}).member_indices ==
        std::vector<std::size_t>{0});
  CHECK_THROWS_AS(pareto_front({}), ValidationError);

  // a dominates b dominates c.
  const ParetoFront chain = pareto_front(
      {rec(0.9, 9.0, 90.0), rec(0.8, 8.0, 100.0), rec(0.7, 7.0, 110.0)});
  CHECK(chain.member_indices == std::vector<std::size_t>{0});

  // Exact objective ties: earliest kept, later listed as duplicates.
  const ParetoFront dup =
      pareto_front({rec(0.9, 9.0, 90.0), rec(0.9, 9.0, 90.0), rec(0.1, 0.0, 500.0)});
  CHECK(dup.member_indices == std::vector<std::size_t>{0});
  CHECK(dup.duplicate_indices == std::vector<std::size_t>{1});
}

TEST_CASE("pareto_front matches a brute-force oracle on random sets") {
  std::mt19937_64 rng(31415);
  std::uniform_int_distribution<int> size_dist(1, 100);
  std::uniform_int_distribution<int> grid(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size_dist(rng);
    std::vector<EvaluationRecord> records;
    for (int i = 0; i < n; ++i)
      records.push_back(
          rec(grid(rng) / 5.0, static_cast<double>(grid(rng)), 100.0 + grid(rng)));

    const ParetoFront front = pareto_front(records);

    // Oracle straight from the definition, including the earliest-tie rule.
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < records.size(); ++i) {
      bool excluded = false;
      for (std::size_t j = 0; j < records.size() && !excluded; ++j) {
        if (j == i) continue;
        if (dominates(records[j].objectives, records[i].objectives)) excluded = true;
        if (records[j].objectives == records[i].objectives && j < i) excluded = true;
      }
      if (!excluded) expected.push_back(i);
    }
    CHECK(front.member_indices == expected);
  }
}

TEST_CASE("normalization inverts runtime and min-max scales") {
  const std::vector<ObjectiveVector> vecs{{0.2, 0.0, 900.0}, {0.8, 10.0, 1500.0}};
  const ObjectiveBounds bounds = induce_bounds(vecs);
  const auto norm = normalize(vecs, bounds);
  // Faster runtime maps to 1.0.
  CHECK(norm[0][2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm[1][2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm[0][0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm[1][0] == doctest::Approx(1.0).epsilon(1e-12));

  // Single vector: zero ranges map to all-ones.
  const auto single = normalize({vecs[0]}, induce_bounds({vecs[0]}));
  CHECK(single[0] == std::array<double, 3>{1.0, 1.0, 1.0});
}

TEST_CASE("normalization preserves dominance under shared bounds") {
  std::mt19937_64 rng(999);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const ObjectiveVector a{unit(rng), 10 * unit(rng), 100 + 100 * unit(rng)};
    const ObjectiveVector b{unit(rng), 10 * unit(rng), 100 + 100 * unit(rng)};
    const ObjectiveBounds bounds = induce_bounds({a, b});
    const auto norm = normalize({a, b}, bounds);
    const bool before = dominates(a, b);
    bool after = true, strict = false;
    for (int k = 0; k < 3; ++k) {
      if (norm[0][k] < norm[1][k] - 1e-15) after = false;
      if (norm[0][k] > norm[1][k] + 1e-15) strict = true;
    }
    CHECK(before == (after && strict));
  }
}

TEST_CASE("hypervolume analytic cases") {
  const std::array<double, 3> ref{-0.1, -0.1, -0.1};

  // Single full box: bitwise-exact product and exact 100 percent.
  CHECK(hypervolume3({{1.0, 1.0, 1.0}}, ref) == (1.1 * 1.1) * 1.1);

  // A contained point changes nothing mathematically; the extra sweep level
  // re-associates the slab sum, so equality holds to rounding, not bitwise.
  CHECK(hypervolume3({{1.0, 1.0, 1.0}, {0.5, 0.5, 0.5}}, ref) ==
        doctest::Approx((1.1 * 1.1) * 1.1).epsilon(1e-14));

  // Three axis corners against the inclusion-exclusion oracle.
  const std::vector<std::array<double, 3>> corners{
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  const double expected = union_volume_oracle(corners, ref);
  CHECK(hypervolume3(corners, ref) == doctest::Approx(expected).epsilon(1e-12));

  CHECK(hypervolume3({}, ref) == 0.0);
  CHECK_THROWS_AS(hypervolume3({{1.0, 1.0, -0.1}}, ref), ValidationError);
}

TEST_CASE("hypervolume matches inclusion-exclusion for up to 6 points") {
  std::mt19937_64 rng(161803);
  const std::array<double, 3> ref{-0.1, -0.1, -0.1};
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const auto pts = random_points(rng, n);
    const double expected = union_volume_oracle(pts, ref);
    const double got = hypervolume3(pts, ref);
    CHECK(std::abs(got - expected) < 1e-9);
  }
}

TEST_CASE("hypervolume matches a 10^6-cell grid for 25 points") {
  std::mt19937_64 rng(271828);
  const std::array<double, 3> ref{-0.1, -0.1, -0.1};
  for (int trial = 0; trial < 3; ++trial) {
    const auto pts = random_points(rng, 25);
    const double approx = grid_volume_oracle(pts, ref, 100);
    const double got = hypervolume3(pts, ref);
    CHECK(std::abs(got - approx) < 1e-2);
  }
}

TEST_CASE("hypervolume is monotone under point addition") {
  // Monotone up to rounding: the added point reshapes the slab decomposition,
  // which can move the sum by an ulp even when the union is unchanged.
  std::mt19937_64 rng(555);
  const std::array<double, 3> ref{-0.1, -0.1, -0.1};
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = random_points(rng, 5);
    const double before = hypervolume3(pts, ref);
    pts.push_back(random_points(rng, 1)[0]);
    CHECK(hypervolume3(pts, ref) >= before - 1e-12);
  }
}

TEST_CASE("ties in the swept coordinate are merged, not double-counted") {
  const std::array<double, 3> ref{-0.1, -0.1, -0.1};
  const std::vector<std::array<double, 3>> pts{{1.0, 0.2, 0.5}, {0.2, 1.0, 0.5}};
  CHECK(hypervolume3(pts, ref) ==
        doctest::Approx(union_volume_oracle(pts, ref)).epsilon(1e-12));
}

TEST_CASE("hypervolume report fixes the percent convention") {
  const std::vector<ObjectiveVector> one{{0.5, 3.0, 1000.0}};
  const HypervolumeReport rep = hypervolume_report(one, std::nullopt, kDefaultReference);
  CHECK(rep.percent == 100.0); // zero-range bounds normalize to (1,1,1)
  CHECK(rep.front_size == 1);
  CHECK(rep.full_box_volume == (1.1 * 1.1) * 1.1);
  CHECK(rep.raw_volume == rep.full_box_volume);

  const auto j = nlohmann::ordered_json::parse(rep.to_json());
  CHECK(j.contains("percent_convention"));
  CHECK(j["reference_point"] == nlohmann::ordered_json::array({-0.1, -0.1, -0.1}));
  CHECK(j.contains("normalization_bounds"));

  CHECK_THROWS_AS(hypervolume_report({}, std::nullopt, kDefaultReference),
                  ValidationError);
}

TEST_CASE("explicit bounds override induced bounds and are echoed") {
  const std::vector<ObjectiveVector> vecs{{0.5, 5.0, 1000.0}, {0.7, 2.0, 1200.0}};
  ObjectiveBounds custom;
  custom.min = {0.0, 0.0, 800.0};
  custom.max = {1.0, 10.0, 1600.0};
  const HypervolumeReport rep = hypervolume_report(vecs, custom, kDefaultReference);
  CHECK(rep.normalization_bounds == custom);
  const HypervolumeReport induced =
      hypervolume_report(vecs, std::nullopt, kDefaultReference);
  CHECK(rep.percent != induced.percent);
}

TEST_CASE("correctness renders as k/N with per-instance detail") {
  EvaluationRecord with_detail = rec(4.0 / 9.0, 0.0, 943.1);
  for (int i = 1; i <= 9; ++i) {
    InstanceResult r;
    r.instance_id = "inst-" + std::to_string(i);
    r.passed = i <= 4;
    with_detail.per_instance.push_back(r);
  }
  CHECK(render_correctness(with_detail) == "4/9");

  const EvaluationRecord bare = rec(0.4444, 0.0, 943.1);
  CHECK(render_correctness(bare) == "0.4444");
}

TEST_CASE("front exports carry the tuning-study columns") {
  const ConfigSpace space = default_space();
  std::vector<EvaluationRecord> records;
  std::mt19937_64 rng(12);
  for (int i = 0; i < 4; ++i) {
    EvaluationRecord r;
    r.config = random_config(space, rng);
    r.objectives = ObjectiveVector{0.2 + 0.2 * i, 2.0 * i, 1000.0 - 50.0 * i};
    records.push_back(r);
  }
  const ParetoFront front = pareto_front(records);
  const std::vector<double> hv(front.member_indices.size(), 50.0);

  const std::string csv = pareto_front_to_csv(front, records, space, &hv);
  CHECK(csv.find("config,") == 0);
  CHECK(csv.find("temperature") != std::string::npos);
  CHECK(csv.find("correctness") != std::string::npos);
  CHECK(csv.find("perf_gain_pct") != std::string::npos);
  CHECK(csv.find("runtime_s") != std::string::npos);
  CHECK(csv.find("hv_percent") != std::string::npos);

  const auto j = nlohmann::ordered_json::parse(
      pareto_front_to_json(front, records, space, &hv));
  CHECK(j["extracted_from"] == 4);
  REQUIRE(j["members"].is_array());
  CHECK(j["members"].size() == front.member_indices.size());
  CHECK(j["members"][0].contains("objectives"));
  CHECK(j["members"][0].contains("hypervolume_percent"));
}
