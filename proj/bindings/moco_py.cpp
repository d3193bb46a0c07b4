// Python bindings for the core operations. Structured data crosses the
// boundary as plain dicts/lists; JSON-backed types round-trip through their
// string serializers so Python and C++ artifacts stay byte-compatible.

#include <filesystem>
#include <memory>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "moco/analysis.hpp"
#include "moco/evaluation.hpp"
#include "moco/evolution.hpp"
#include "moco/ga_params.hpp"
#include "moco/metrics.hpp"
#include "moco/persistence.hpp"
#include "moco/search_space.hpp"

namespace py = pybind11;
using namespace moco;
using ordered_json = nlohmann::ordered_json;

namespace {

py::object json_to_py(const ordered_json &j) {
  py::module_ pyjson = py::module_::import("json");
  return pyjson.attr("loads")(j.dump());
}

py::object json_text_to_py(const std::string &text) {
  py::module_ pyjson = py::module_::import("json");
  return pyjson.attr("loads")(text);
}

ObjectiveVector triple_to_objectives(const std::array<double, 3> &t) {
  return ObjectiveVector{t[0], t[1], t[2]};
}

std::vector<ObjectiveVector>
triples_to_objectives(const std::vector<std::array<double, 3>> &ts) {
  std::vector<ObjectiveVector> out;
  out.reserve(ts.size());
  for (const auto &t : ts) out.push_back(triple_to_objectives(t));
  return out;
}

EvaluationRecord record_from_triple(const std::array<double, 3> &t) {
  EvaluationRecord rec;
  rec.objectives = triple_to_objectives(t);
  return rec;
}

} // namespace

PYBIND11_MODULE(moco, m) {
  m.doc() = "Multi-objective configuration optimization toolkit";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<LedgerError>(m, "LedgerError", PyExc_RuntimeError);
  py::register_exception<TraceError>(m, "TraceError", PyExc_RuntimeError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("default_space_json", [] { return json_text_to_py(default_space().to_json()); },
        "The built-in 8-parameter space as a dict");

  m.def(
      "decode",
      [](const std::vector<double> &genome, const std::string &space_json) {
        const ConfigSpace space =
            space_json.empty() ? default_space() : ConfigSpace::from_json(space_json);
        const Configuration cfg = decode(genome, space);
        return json_text_to_py(configuration_to_json(cfg, space));
      },
      py::arg("genome"), py::arg("space_json") = "",
      "Map a genome in [0,1]^n to a configuration dict");

  m.def(
      "encode",
      [](const std::string &config_json, const std::string &space_json) {
        const ConfigSpace space =
            space_json.empty() ? default_space() : ConfigSpace::from_json(space_json);
        return encode(configuration_from_json(config_json, space), space);
      },
      py::arg("config_json"), py::arg("space_json") = "",
      "Inverse of decode up to bucket quantization");

  m.def(
      "evaluate_synthetic",
      [](const std::string &config_json, int n_instances) {
        const ConfigSpace space = default_space();
        SyntheticEvaluator evaluator;
        std::vector<std::string> instances;
        for (int i = 1; i <= n_instances; ++i)
          instances.push_back("inst-" + std::to_string(i));
        const Configuration cfg = configuration_from_json(config_json, space);
        EvalOutput out = evaluator.evaluate(cfg, instances);
        const ObjectiveVector agg = aggregate(out.results);
        ordered_json j;
        j["config_id"] = cfg.id;
        j["correctness"] = agg.correctness;
        j["perf_gain_pct"] = agg.perf_gain_pct;
        j["runtime_s"] = agg.runtime_s;
        return json_to_py(j);
      },
      py::arg("config_json"), py::arg("n_instances") = 9,
      "Evaluate a configuration on the synthetic agent model");

  m.def(
      "pareto_member_indices",
      [](const std::vector<std::array<double, 3>> &triples) {
        std::vector<EvaluationRecord> records;
        records.reserve(triples.size());
        for (const auto &t : triples) records.push_back(record_from_triple(t));
        return pareto_front(records).member_indices;
      },
      py::arg("objectives"),
      "Non-dominated indices among (correctness, perf_gain_pct, runtime_s) triples");

  m.def(
      "dominates",
      [](const std::array<double, 3> &a, const std::array<double, 3> &b) {
        return dominates(triple_to_objectives(a), triple_to_objectives(b));
      },
      py::arg("a"), py::arg("b"),
      "Pareto dominance on (correctness, perf_gain_pct, runtime_s) triples");

  m.def(
      "hypervolume",
      [](const std::vector<std::array<double, 3>> &triples,
         const std::array<double, 3> &reference) {
        const HypervolumeReport report =
            hypervolume_report(triples_to_objectives(triples), std::nullopt, reference);
        return json_text_to_py(report.to_json());
      },
      py::arg("objectives"), py::arg("reference") = kDefaultReference,
      "Normalized 3-objective hypervolume report as a dict");

  m.def(
      "mann_whitney_u",
      [](const std::vector<double> &a, const std::vector<double> &b) {
        const UTestResult r = mann_whitney_u(a, b);
        ordered_json j;
        j["u_statistic"] = r.u_statistic;
        j["p_value"] = r.p_value;
        j["method"] = r.method;
        j["n1"] = r.n1;
        j["n2"] = r.n2;
        return json_to_py(j);
      },
      py::arg("a"), py::arg("b"), "Two-sided Mann-Whitney U test");

  m.def("significant_gain", &significant_gain, py::arg("base"), py::arg("patched"),
        py::arg("alpha") = 0.1,
        "Percent runtime gain, gated to 0 unless p < alpha and patched is faster");

  m.def(
      "feature_importance",
      [](const std::vector<std::vector<double>> &features,
         const std::vector<double> &targets, std::size_t n_trees, std::uint64_t seed) {
        ForestParams params;
        params.n_trees = n_trees;
        params.seed = seed;
        RegressionForest forest(features, targets, params);
        return forest.feature_importance();
      },
      py::arg("features"), py::arg("targets"), py::arg("n_trees") = 200,
      py::arg("seed") = 0, "Mean-decrease-in-impurity importances, normalized to sum 1");

  m.def(
      "optimize_synthetic",
      [](const std::string &ledger_path, int population_size, int generations,
         std::uint64_t seed, int n_instances, const std::string &created_at) {
        const ConfigSpace space = default_space();
        GAParams params;
        params.population_size = population_size;
        params.generations = generations;
        params.seed = seed;
        SyntheticEvaluator evaluator;
        RunOptions options;
        for (int i = 1; i <= n_instances; ++i)
          options.instances.push_back("inst-" + std::to_string(i));

        std::unique_ptr<RunLedger> ledger;
        if (std::filesystem::exists(ledger_path)) {
          ledger = std::make_unique<RunLedger>(RunLedger::open_existing(ledger_path));
        } else {
          LedgerHeader header;
          header.artifact_version = "0.1.0";
          header.created_at = created_at;
          header.evaluator = evaluator.label();
          header.ga_params = params;
          header.instances = options.instances;
          header.space = space;
          ledger = std::make_unique<RunLedger>(RunLedger::create(ledger_path, header));
        }
        const OptimizationResult result =
            run_nsga2(space, evaluator, params, *ledger, options);

        ordered_json j;
        j["records"] = result.all_records.size();
        j["per_generation_hypervolume_percent"] = result.per_generation_hypervolume;
        j["pareto_size"] = result.pareto.member_indices.size();
        ordered_json front = ordered_json::array();
        for (std::size_t idx : result.pareto.member_indices) {
          const auto &rec = result.all_records[idx];
          front.push_back({{"config_id", rec.config.id},
                           {"correctness", rec.objectives.correctness},
                           {"perf_gain_pct", rec.objectives.perf_gain_pct},
                           {"runtime_s", rec.objectives.runtime_s}});
        }
        j["pareto"] = std::move(front);
        return json_to_py(j);
      },
      py::arg("ledger_path"), py::arg("population_size") = 5, py::arg("generations") = 5,
      py::arg("seed") = 0, py::arg("n_instances") = 9,
      py::arg("created_at") = "1970-01-01T00:00:00Z",
      "Run the NSGA-II loop with the synthetic evaluator, writing a ledger");

  m.def(
      "load_ledger",
      [](const std::string &path) {
        RunLedger ledger = RunLedger::load(path);
        ordered_json j;
        j["header"] = ordered_json::parse(ledger.header().to_json());
        ordered_json records = ordered_json::array();
        for (const auto &rec : ledger.records())
          records.push_back(
              ordered_json::parse(record_to_json(rec, ledger.header().space)));
        j["records"] = std::move(records);
        return json_to_py(j);
      },
      py::arg("path"), "Read a run ledger into a dict");
}
