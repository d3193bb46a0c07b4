#include "moco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace moco {

using ordered_json = nlohmann::ordered_json;

bool dominates(const ObjectiveVector &a, const ObjectiveVector &b) {
  const auto ma = a.to_minimization();
  const auto mb = b.to_minimization();
  bool strictly = false;
  for (std::size_t i = 0; i < 3; ++i) {
    if (ma[i] > mb[i]) return false;
    if (ma[i] < mb[i]) strictly = true;
  }
  return strictly;
}

bool dominates_min(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.size() != b.size())
    throw ValidationError("dominance check: dimension mismatch");
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly = true;
  }
  return strictly;
}

ParetoFront pareto_front(const std::vector<EvaluationRecord> &records) {
  if (records.empty())
    throw ValidationError("pareto_front: no records");
  ParetoFront front;
  front.extracted_from = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < records.size() && !dominated; ++j)
      if (j != i && dominates(records[j].objectives, records[i].objectives))
        dominated = true;
    if (dominated) continue;
    bool tie_of_member = false;
    for (std::size_t m : front.member_indices)
      if (records[m].objectives == records[i].objectives) {
        tie_of_member = true;
        break;
      }
    if (tie_of_member)
      front.duplicate_indices.push_back(i);
    else
      front.member_indices.push_back(i);
  }
  return front;
}

ObjectiveBounds induce_bounds(const std::vector<ObjectiveVector> &vectors) {
  if (vectors.empty())
    throw ValidationError("cannot induce bounds from an empty set");
  ObjectiveBounds b;
  for (std::size_t k = 0; k < 3; ++k) {
    b.min[k] = std::numeric_limits<double>::infinity();
    b.max[k] = -std::numeric_limits<double>::infinity();
  }
  for (const auto &v : vectors) {
    const std::array<double, 3> raw{v.correctness, v.perf_gain_pct, v.runtime_s};
    for (std::size_t k = 0; k < 3; ++k) {
      b.min[k] = std::min(b.min[k], raw[k]);
      b.max[k] = std::max(b.max[k], raw[k]);
    }
  }
  return b;
}

std::array<double, 3> normalize_one(const ObjectiveVector &v, const ObjectiveBounds &b) {
  std::array<double, 3> out{};
  const std::array<double, 3> raw{v.correctness, v.perf_gain_pct, v.runtime_s};
  for (std::size_t k = 0; k < 3; ++k) {
    const double range = b.max[k] - b.min[k];
    if (range <= 0.0) {
      out[k] = 1.0;
    } else if (k == 2) {
      // runtime inverted: smaller is better, min maps to 1
      out[k] = (b.max[k] - raw[k]) / range;
    } else {
      out[k] = (raw[k] - b.min[k]) / range;
    }
  }
  return out;
}

std::vector<std::array<double, 3>>
normalize(const std::vector<ObjectiveVector> &vectors,
          const std::optional<ObjectiveBounds> &bounds) {
  const ObjectiveBounds b = bounds ? *bounds : induce_bounds(vectors);
  std::vector<std::array<double, 3>> out;
  out.reserve(vectors.size());
  for (const auto &v : vectors)
    out.push_back(normalize_one(v, b));
  return out;
}

namespace {

// Union area of rectangles [(rx,ry),(x_i,y_i)]: scan in descending x, each
// point with a new best y adds a disjoint horizontal slab.
double staircase_area(std::vector<std::array<double, 2>> pts, double rx, double ry) {
  std::sort(pts.begin(), pts.end(),
            [](const auto &a, const auto &b) { return a[0] > b[0]; });
  double area = 0.0;
  double best_y = ry;
  for (const auto &p : pts) {
    if (p[1] > best_y) {
      area += (p[0] - rx) * (p[1] - best_y);
      best_y = p[1];
    }
  }
  return area;
}

} // namespace

double hypervolume3(const std::vector<std::array<double, 3>> &points,
                    const std::array<double, 3> &reference) {
  for (const auto &p : points)
    for (std::size_t k = 0; k < 3; ++k)
      if (!(p[k] > reference[k]))
        throw ValidationError("hypervolume: point does not strictly dominate the reference");
  if (points.empty()) return 0.0;

  std::vector<std::array<double, 3>> sorted = points;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto &a, const auto &b) { return a[2] > b[2]; });

  double volume = 0.0;
  std::vector<std::array<double, 2>> active;
  active.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    active.push_back({sorted[i][0], sorted[i][1]});
    const double z_top = sorted[i][2];
    const double z_bottom = (i + 1 < sorted.size()) ? sorted[i + 1][2] : reference[2];
    if (z_top == z_bottom) continue; // merged into the next slab
    volume += staircase_area(active, reference[0], reference[1]) * (z_top - z_bottom);
  }
  return volume;
}

HypervolumeReport hypervolume_report(const std::vector<ObjectiveVector> &vectors,
                                     const std::optional<ObjectiveBounds> &bounds,
                                     const std::array<double, 3> &reference) {
  if (vectors.empty())
    throw ValidationError("hypervolume report: empty selection");
  HypervolumeReport rep;
  rep.reference_point = reference;
  rep.normalization_bounds = bounds ? *bounds : induce_bounds(vectors);
  rep.front_size = vectors.size();
  rep.raw_volume = hypervolume3(normalize(vectors, rep.normalization_bounds), reference);
  rep.full_box_volume =
      (1.0 - reference[0]) * (1.0 - reference[1]) * (1.0 - reference[2]);
  // Grouped so a front filling the whole box reports exactly 100.
  rep.percent = 100.0 * (rep.raw_volume / rep.full_box_volume);
  return rep;
}

std::string HypervolumeReport::to_json() const {
  ordered_json j;
  j["raw_volume"] = raw_volume;
  j["percent"] = percent;
  j["percent_convention"] = "100 * raw_volume / volume of the full normalized box above the reference point";
  j["full_box_volume"] = full_box_volume;
  j["reference_point"] = reference_point;
  j["normalization_bounds"] = {
      {"correctness", {normalization_bounds.min[0], normalization_bounds.max[0]}},
      {"perf_gain_pct", {normalization_bounds.min[1], normalization_bounds.max[1]}},
      {"runtime_s", {normalization_bounds.min[2], normalization_bounds.max[2]}},
  };
  j["front_size"] = front_size;
  return j.dump(2);
}

std::string render_correctness(const EvaluationRecord &rec) {
  if (auto counts = rec.pass_counts()) {
    return std::to_string(counts->first) + "/" + std::to_string(counts->second);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", rec.objectives.correctness);
  return buf;
}

namespace {

ordered_json member_json(const EvaluationRecord &rec, const ConfigSpace &space,
                         std::size_t index, const double *hv) {
  ordered_json j;
  j["index"] = index;
  if (rec.label) j["label"] = *rec.label;
  j["config"] = ordered_json::parse(configuration_to_json(rec.config, space));
  j["objectives"] = {{"correctness", rec.objectives.correctness},
                     {"perf_gain_pct", rec.objectives.perf_gain_pct},
                     {"runtime_s", rec.objectives.runtime_s}};
  j["correctness_display"] = render_correctness(rec);
  if (hv) j["hypervolume_percent"] = *hv;
  return j;
}

std::string csv_escape(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

} // namespace

std::string pareto_front_to_json(const ParetoFront &front,
                                 const std::vector<EvaluationRecord> &records,
                                 const ConfigSpace &space,
                                 const std::vector<double> *hv_percent) {
  ordered_json j;
  j["extracted_from"] = front.extracted_from;
  j["members"] = ordered_json::array();
  for (std::size_t k = 0; k < front.member_indices.size(); ++k) {
    const std::size_t idx = front.member_indices[k];
    const double *hv = (hv_percent && k < hv_percent->size()) ? &(*hv_percent)[k] : nullptr;
    j["members"].push_back(member_json(records[idx], space, idx, hv));
  }
  j["duplicates"] = ordered_json::array();
  for (std::size_t idx : front.duplicate_indices)
    j["duplicates"].push_back(member_json(records[idx], space, idx, nullptr));
  return j.dump(2);
}

std::string pareto_front_to_csv(const ParetoFront &front,
                                const std::vector<EvaluationRecord> &records,
                                const ConfigSpace &space,
                                const std::vector<double> *hv_percent) {
  std::ostringstream out;
  out << "config";
  for (const auto &p : space.params())
    out << ',' << csv_escape(p.name);
  out << ",correctness,perf_gain_pct,runtime_s";
  if (hv_percent) out << ",hv_percent";
  out << '\n';
  for (std::size_t k = 0; k < front.member_indices.size(); ++k) {
    const auto &rec = records[front.member_indices[k]];
    out << csv_escape(rec.label ? *rec.label : rec.config.id);
    for (const auto &p : space.params()) {
      const ParamValue *v = rec.config.find(p.name);
      out << ',' << (v ? csv_escape(render_value(*v)) : "");
    }
    out << ',' << render_correctness(rec);
    char buf[64];
    std::snprintf(buf, sizeof(buf), ",%.4f,%.4f", rec.objectives.perf_gain_pct,
                  rec.objectives.runtime_s);
    out << buf;
    if (hv_percent) {
      std::snprintf(buf, sizeof(buf), ",%.4f",
                    k < hv_percent->size() ? (*hv_percent)[k] : 0.0);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

} // namespace moco
