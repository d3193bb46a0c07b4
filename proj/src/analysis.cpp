#include "moco/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace moco {

namespace {

// Midranks over the pooled sample, 1-based.
std::vector<double> midranks(const std::vector<double> &pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> ranks(pooled.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

double u_from_rank_sum(double r1, std::size_t n1, std::size_t n2) {
  double u1 = r1 - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  double u2 = static_cast<double>(n1) * static_cast<double>(n2) - u1;
  return std::min(u1, u2);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Exact two-sided p = P(min(U1,U2) <= observed) over all C(N, n1) ways of
// assigning the pooled midranks to group one. N <= 16 keeps the bitmask
// enumeration at 65536 masks.
double exact_p(const std::vector<double> &ranks, std::size_t n1, double u_obs) {
  const std::size_t n = ranks.size();
  const std::size_t n2 = n - n1;
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  const std::uint32_t limit = 1u << n;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
    double r1 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) r1 += ranks[i];
    ++total;
    if (u_from_rank_sum(r1, n1, n2) <= u_obs + 1e-12) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace

UTestResult mann_whitney_u(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.empty() || b.empty())
    throw ValidationError("mann_whitney_u: empty sample");
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  std::vector<double> pooled;
  pooled.reserve(n1 + n2);
  pooled.insert(pooled.end(), a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<double> ranks = midranks(pooled);
  double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<long>(n1), 0.0);
  double u = u_from_rank_sum(r1, n1, n2);

  UTestResult res;
  res.u_statistic = u;
  res.n1 = n1;
  res.n2 = n2;
  const std::size_t n = n1 + n2;
  if (n <= 16) {
    res.method = "exact";
    res.p_value = exact_p(ranks, n1, u);
  } else {
    res.method = "normal_approx";
    // Tie-corrected variance; sigma == 0 means every value is tied.
    std::vector<double> sorted(pooled);
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
    double nn = static_cast<double>(n);
    double mu = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
    double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
                 ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var <= 0.0) {
      res.p_value = 1.0;
    } else {
      double z = (u - mu + 0.5) / std::sqrt(var);
      double p = 2.0 * normal_cdf(z);
      res.p_value = std::min(1.0, std::max(p, std::numeric_limits<double>::min()));
    }
  }
  return res;
}

double significant_gain(const std::vector<double> &base,
                        const std::vector<double> &patched, double alpha) {
  if (base.size() < 2 || patched.size() < 2)
    throw ValidationError("significant_gain: need >= 2 samples per side");
  double base_mean = std::accumulate(base.begin(), base.end(), 0.0) /
                     static_cast<double>(base.size());
  if (base_mean <= 0.0)
    throw ValidationError("significant_gain: non-positive base mean");
  double patched_mean = std::accumulate(patched.begin(), patched.end(), 0.0) /
                        static_cast<double>(patched.size());
  if (patched_mean >= base_mean) return 0.0;
  UTestResult t = mann_whitney_u(base, patched);
  if (t.p_value >= alpha) return 0.0;
  return 100.0 * (base_mean - patched_mean) / base_mean;
}

std::string ImportanceReport::to_json() const {
  nlohmann::ordered_json j;
  j["objective"] = objective;
  nlohmann::ordered_json imp = nlohmann::ordered_json::object();
  for (const auto &[name, v] : importances) imp[name] = v;
  j["importances"] = std::move(imp);
  j["forest_params"] = {{"n_trees", forest_params.n_trees},
                        {"max_features", forest_params.max_features},
                        {"min_samples_leaf", forest_params.min_samples_leaf},
                        {"seed", forest_params.seed}};
  j["sample_count"] = sample_count;
  j["importance_kind"] = "mean_decrease_in_impurity";
  return j.dump();
}

namespace {

struct SplitScan {
  int feature = -1;
  double threshold = 0.0;
  double reduction = 0.0;
  bool found = false;
};

double sse_of(const std::vector<double> &ys, const std::vector<std::size_t> &idx) {
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i : idx) {
    sum += ys[i];
    sumsq += ys[i] * ys[i];
  }
  double n = static_cast<double>(idx.size());
  return std::max(0.0, sumsq - sum * sum / n);
}

} // namespace

RegressionForest::RegressionForest(const std::vector<std::vector<double>> &features,
                                   const std::vector<double> &targets,
                                   ForestParams params)
    : params_(params) {
  if (features.size() != targets.size())
    throw ValidationError("forest: feature/target row count mismatch");
  if (features.size() < 2)
    throw ValidationError("forest: need at least 2 samples");
  n_samples_ = features.size();
  n_features_ = features.front().size();
  for (const auto &row : features)
    if (row.size() != n_features_)
      throw ValidationError("forest: ragged feature matrix");
  if (params_.max_features == 0)
    params_.max_features = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n_features_) / 3.0));
  params_.max_features = std::min(params_.max_features, n_features_);

  // Canonical sample order: lexicographic by (features, target). Bootstrap
  // positions index this order, so the fit depends on the multiset of (x, y)
  // pairs and the seed, never on caller row order.
  std::vector<std::size_t> canon(n_samples_);
  std::iota(canon.begin(), canon.end(), 0);
  std::sort(canon.begin(), canon.end(), [&](std::size_t i, std::size_t j) {
    if (features[i] != features[j]) return features[i] < features[j];
    return targets[i] < targets[j];
  });
  std::vector<std::vector<double>> base_rows;
  std::vector<double> base_ys;
  base_rows.reserve(n_samples_);
  base_ys.reserve(n_samples_);
  for (std::size_t c : canon) {
    base_rows.push_back(features[c]);
    base_ys.push_back(targets[c]);
  }

  trees_.reserve(params_.n_trees);
  for (std::size_t t = 0; t < params_.n_trees; ++t) {
    std::seed_seq seq{params_.seed, static_cast<std::uint64_t>(t)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n_samples_ - 1);

    // Sorted draw positions keep each tree a function of the drawn multiset.
    std::vector<std::size_t> draw(n_samples_);
    for (auto &d : draw) d = pick(rng);
    std::sort(draw.begin(), draw.end());
    std::vector<std::vector<double>> rows;
    std::vector<double> ys;
    rows.reserve(n_samples_);
    ys.reserve(n_samples_);
    for (std::size_t d : draw) {
      rows.push_back(base_rows[d]);
      ys.push_back(base_ys[d]);
    }
    trees_.push_back(build_tree(rows, ys, rng));
  }
}

RegressionForest::Tree
RegressionForest::build_tree(const std::vector<std::vector<double>> &rows,
                             const std::vector<double> &ys,
                             std::mt19937_64 &rng) const {
  Tree tree;
  tree.importance.assign(n_features_, 0.0);
  const std::size_t msl = params_.min_samples_leaf;

  std::vector<std::size_t> all(rows.size());
  std::iota(all.begin(), all.end(), 0);

  // DFS with explicit recursion; node indices are assigned pre-order so the
  // layout is deterministic.
  struct Frame {
    std::vector<std::size_t> idx;
    int node;
  };

  auto make_leaf = [&](const std::vector<std::size_t> &idx) {
    double sum = 0.0;
    for (std::size_t i : idx) sum += ys[i];
    Node n;
    n.value = sum / static_cast<double>(idx.size());
    return n;
  };

  std::vector<Frame> stack;
  tree.nodes.emplace_back();
  stack.push_back({std::move(all), 0});

  std::vector<std::size_t> feat_pool(n_features_);

  while (!stack.empty()) {
    Frame frame = std::move(stack.back());
    stack.pop_back();
    const auto &idx = frame.idx;
    double parent_sse = sse_of(ys, idx);
    if (idx.size() < 2 * msl || parent_sse <= 1e-12) {
      tree.nodes[frame.node] = make_leaf(idx);
      continue;
    }

    std::iota(feat_pool.begin(), feat_pool.end(), 0);
    std::shuffle(feat_pool.begin(), feat_pool.end(), rng);

    SplitScan best;
    for (std::size_t fi = 0; fi < params_.max_features; ++fi) {
      std::size_t f = feat_pool[fi];
      // Scan thresholds at midpoints of sorted unique values.
      std::vector<std::size_t> sorted(idx);
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return rows[a][f] < rows[b][f];
      });
      double left_sum = 0.0, left_sq = 0.0;
      double total_sum = 0.0, total_sq = 0.0;
      for (std::size_t i : sorted) {
        total_sum += ys[i];
        total_sq += ys[i] * ys[i];
      }
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        double y = ys[sorted[k]];
        left_sum += y;
        left_sq += y * y;
        if (rows[sorted[k]][f] == rows[sorted[k + 1]][f]) continue;
        std::size_t nl = k + 1;
        std::size_t nr = sorted.size() - nl;
        if (nl < msl || nr < msl) continue;
        double sse_l = left_sq - left_sum * left_sum / static_cast<double>(nl);
        double right_sum = total_sum - left_sum;
        double right_sq = total_sq - left_sq;
        double sse_r = right_sq - right_sum * right_sum / static_cast<double>(nr);
        double reduction = parent_sse - std::max(0.0, sse_l) - std::max(0.0, sse_r);
        // Ties keep the first candidate in scan order.
        if (reduction > 1e-12 &&
            (!best.found || reduction > best.reduction + 1e-15)) {
          best.found = true;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (rows[sorted[k]][f] + rows[sorted[k + 1]][f]);
          best.reduction = reduction;
        }
      }
    }

    if (!best.found) {
      tree.nodes[frame.node] = make_leaf(idx);
      continue;
    }

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx)
      (rows[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right)
          .push_back(i);

    // Impurity decrease weighted by node size: (sse_p - sse_l - sse_r) already
    // carries the sample-count weight; divide by the bootstrap size once.
    tree.importance[static_cast<std::size_t>(best.feature)] +=
        best.reduction / static_cast<double>(rows.size());

    int left_id = static_cast<int>(tree.nodes.size());
    int right_id = left_id + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(frame.node)].feature = best.feature;
    tree.nodes[static_cast<std::size_t>(frame.node)].threshold = best.threshold;
    tree.nodes[static_cast<std::size_t>(frame.node)].left = left_id;
    tree.nodes[static_cast<std::size_t>(frame.node)].right = right_id;
    stack.push_back({std::move(right), right_id});
    stack.push_back({std::move(left), left_id});
  }
  return tree;
}

double RegressionForest::predict(const std::vector<double> &x) const {
  if (x.size() != n_features_)
    throw ValidationError("forest predict: wrong feature count");
  double sum = 0.0;
  for (const auto &tree : trees_) {
    int cur = 0;
    while (tree.nodes[static_cast<std::size_t>(cur)].feature >= 0) {
      const Node &n = tree.nodes[static_cast<std::size_t>(cur)];
      cur = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    sum += tree.nodes[static_cast<std::size_t>(cur)].value;
  }
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> RegressionForest::feature_importance() const {
  std::vector<double> acc(n_features_, 0.0);
  std::size_t contributing = 0;
  for (const auto &tree : trees_) {
    double total = std::accumulate(tree.importance.begin(), tree.importance.end(), 0.0);
    if (total <= 0.0) continue;
    ++contributing;
    for (std::size_t f = 0; f < n_features_; ++f)
      acc[f] += tree.importance[f] / total;
  }
  if (contributing == 0) return acc; // all-zero: no split anywhere
  double norm = std::accumulate(acc.begin(), acc.end(), 0.0);
  for (auto &v : acc) v /= norm;
  return acc;
}

} // namespace moco
