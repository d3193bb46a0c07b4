// Command-line front-end for the optimization toolkit: optimize, evaluate,
// pareto, hypervolume, importance, significance, validate.
//
// Exit codes: 0 success, 2 usage/input error, 3 environment/evaluator error.
// Flag precedence: command line > MOCO_* environment variable > manifest file.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "moco/analysis.hpp"
#include "moco/evaluation.hpp"
#include "moco/evolution.hpp"
#include "moco/ga_params.hpp"
#include "moco/metrics.hpp"
#include "moco/persistence.hpp"
#include "moco/search_space.hpp"

namespace {

using namespace moco;
using ordered_json = nlohmann::ordered_json;

constexpr const char *kVersion = "0.1.0";

std::string slurp(const std::string &path, const std::string &what) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open " + what + ": " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content))
    throw ValidationError("cannot write " + path);
}

std::string now_utc() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_commas(const std::string &s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream stream(s);
  while (std::getline(stream, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first != std::string::npos)
      out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

/// "9" means ids inst-1..inst-9; anything else is a comma list of ids.
std::vector<std::string> parse_instances(const std::string &spec) {
  if (!spec.empty() && spec.find_first_not_of("0123456789") == std::string::npos) {
    const int n = std::stoi(spec);
    if (n < 1)
      throw ValidationError("instance count must be >= 1");
    std::vector<std::string> ids;
    for (int i = 1; i <= n; ++i)
      ids.push_back("inst-" + std::to_string(i));
    return ids;
  }
  auto ids = split_commas(spec);
  if (ids.empty())
    throw ValidationError("instance list is empty");
  return ids;
}

std::array<double, 3> parse_reference(const std::string &s) {
  const auto parts = split_commas(s);
  if (parts.size() != 3)
    throw ValidationError("--reference needs three comma-separated numbers");
  return {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
}

ObjectiveBounds parse_bounds(const std::string &s) {
  const auto parts = split_commas(s);
  if (parts.size() != 6)
    throw ValidationError(
        "--bounds needs six numbers: corr_min,corr_max,perf_min,perf_max,rt_min,rt_max");
  ObjectiveBounds b;
  for (std::size_t k = 0; k < 3; ++k) {
    b.min[k] = std::stod(parts[2 * k]);
    b.max[k] = std::stod(parts[2 * k + 1]);
  }
  return b;
}

ConfigSpace load_space(const std::string &path) {
  if (path.empty()) return default_space();
  return ConfigSpace::from_json(slurp(path, "space file"));
}

/// Accepts {"values": {...}} / full configuration JSON / a bare values map.
Configuration load_config_file(const std::string &path, const ConfigSpace &space) {
  const std::string text = slurp(path, "config file");
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw ValidationError(std::string("config file parse error: ") + e.what());
  }
  ordered_json wrapped;
  wrapped["values"] = j.contains("values") ? j["values"] : j;
  return configuration_from_json(wrapped.dump(), space);
}

// ---------------------------------------------------------------------------
// Evaluator selection
// ---------------------------------------------------------------------------

struct EvaluatorChoice {
  std::string kind = "synthetic"; // synthetic | replay | external
  std::string trace_path;
  std::string command;
  double timeout_s = 600.0;
  bool external_concurrent_safe = false;
};

/// --evaluator accepts "synthetic", "replay"/"replay:PATH", "external"/"external:CMD".
void apply_evaluator_spec(EvaluatorChoice &choice, const std::string &spec) {
  if (spec == "synthetic" || spec == "replay" || spec == "external") {
    choice.kind = spec;
    return;
  }
  if (spec.rfind("replay:", 0) == 0) {
    choice.kind = "replay";
    choice.trace_path = spec.substr(7);
    return;
  }
  if (spec.rfind("external:", 0) == 0) {
    choice.kind = "external";
    choice.command = spec.substr(9);
    return;
  }
  throw ValidationError("unknown evaluator '" + spec +
                        "' (expected synthetic, replay[:trace], external[:command])");
}

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorChoice &choice,
                                          const ConfigSpace &space) {
  if (choice.kind == "synthetic")
    return std::make_unique<SyntheticEvaluator>();
  if (choice.kind == "replay") {
    if (choice.trace_path.empty())
      throw ValidationError("replay evaluator needs --trace");
    return std::make_unique<ReplayEvaluator>(
        ReplayTrace::load(choice.trace_path, space));
  }
  if (choice.kind == "external") {
    if (choice.command.empty())
      throw ValidationError("external evaluator needs --command");
    return std::make_unique<ExternalEvaluator>(choice.command, space, choice.timeout_s,
                                               choice.external_concurrent_safe);
  }
  throw ValidationError("unknown evaluator kind " + choice.kind);
}

// ---------------------------------------------------------------------------
// Record sources
// ---------------------------------------------------------------------------

EvaluationRecord record_from_trace_row(const TraceRow &row) {
  EvaluationRecord rec;
  rec.config = row.config;
  rec.per_instance = row.results;
  rec.objectives = row.objectives ? *row.objectives : aggregate(row.results);
  rec.generation = -1;
  rec.status = EvalStatus::ok;
  rec.evaluator = "replay";
  if (!row.trace_label.empty()) rec.label = row.trace_label;
  return rec;
}

struct RecordSet {
  ConfigSpace space;
  std::vector<EvaluationRecord> records;
  std::string source;
};

/// Analysis commands read either a ledger or a raw trace file.
RecordSet load_records(const std::string &ledger_path, const std::string &trace_path,
                       const std::string &space_path) {
  if (!ledger_path.empty() && !trace_path.empty())
    throw ValidationError("pass either --ledger or --trace, not both");
  RecordSet set;
  if (!ledger_path.empty()) {
    RunLedger ledger = RunLedger::load(ledger_path);
    if (ledger.partial_lines_ignored() > 0)
      std::cerr << "note: ignored " << ledger.partial_lines_ignored()
                << " partial trailing line(s) in " << ledger_path << "\n";
    set.space = ledger.header().space;
    set.records = ledger.records();
    set.source = ledger_path;
    return set;
  }
  if (!trace_path.empty()) {
    set.space = load_space(space_path);
    ReplayTrace trace = ReplayTrace::load(trace_path, set.space);
    for (const auto &row : trace.rows())
      set.records.push_back(record_from_trace_row(row));
    set.source = trace_path;
    return set;
  }
  throw ValidationError("one of --ledger or --trace is required");
}

// ---------------------------------------------------------------------------
// Rendering helpers
// ---------------------------------------------------------------------------

void print_table(const std::vector<std::string> &headers,
                 const std::vector<std::vector<std::string>> &rows) {
  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) width[c] = headers[c].size();
  for (const auto &row : rows)
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], row[c].size());
  auto print_row = [&](const std::vector<std::string> &row) {
    for (std::size_t c = 0; c < row.size(); ++c)
      std::cout << (c ? "  " : "") << row[c]
                << std::string(width[c] - row[c].size(), ' ');
    std::cout << "\n";
  };
  print_row(headers);
  std::vector<std::string> rule;
  for (std::size_t c = 0; c < headers.size(); ++c)
    rule.emplace_back(width[c], '-');
  print_row(rule);
  for (const auto &row : rows) print_row(row);
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string record_name(const EvaluationRecord &rec) {
  if (rec.label) return *rec.label;
  return rec.config.id.substr(0, 12);
}

const EvaluationRecord *find_baseline(const std::vector<EvaluationRecord> &records,
                                      const std::string &baseline_label) {
  for (const auto &rec : records) {
    if (!rec.label) continue;
    if (*rec.label == baseline_label || *rec.label == "baseline" ||
        *rec.label == "default")
      return &rec;
  }
  return nullptr;
}

/// Per-member single-point hypervolume percent under shared bounds.
std::vector<double> member_hv_percent(const ParetoFront &front,
                                      const std::vector<EvaluationRecord> &records,
                                      const ObjectiveBounds &bounds,
                                      const std::array<double, 3> &reference) {
  std::vector<double> out;
  out.reserve(front.member_indices.size());
  for (std::size_t idx : front.member_indices) {
    std::vector<ObjectiveVector> one{records[idx].objectives};
    out.push_back(hypervolume_report(one, bounds, reference).percent);
  }
  return out;
}

void print_front_table(const ParetoFront &front,
                       const std::vector<EvaluationRecord> &records,
                       const ConfigSpace &space, const std::vector<double> &hv) {
  std::vector<std::string> headers{"config"};
  for (const auto &p : space.params()) headers.push_back(p.name);
  headers.insert(headers.end(), {"corr", "perf%", "runtime_s", "hv%"});
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < front.member_indices.size(); ++k) {
    const auto &rec = records[front.member_indices[k]];
    std::vector<std::string> row{record_name(rec)};
    for (const auto &p : space.params()) {
      const ParamValue *v = rec.config.find(p.name);
      row.push_back(v ? render_value(*v) : "-");
    }
    row.push_back(render_correctness(rec));
    row.push_back(fmt(rec.objectives.perf_gain_pct));
    row.push_back(fmt(rec.objectives.runtime_s, 1));
    row.push_back(k < hv.size() ? fmt(hv[k]) : "-");
    rows.push_back(std::move(row));
  }
  print_table(headers, rows);
}

void print_bounds(const ObjectiveBounds &b) {
  std::cout << "normalization bounds: correctness [" << b.min[0] << ", " << b.max[0]
            << "], perf_gain_pct [" << b.min[1] << ", " << b.max[1]
            << "], runtime_s [" << b.min[2] << ", " << b.max[2] << "]\n";
}

std::vector<ObjectiveVector> objectives_of(const std::vector<EvaluationRecord> &records) {
  std::vector<ObjectiveVector> out;
  out.reserve(records.size());
  for (const auto &rec : records) out.push_back(rec.objectives);
  return out;
}

// ---------------------------------------------------------------------------
// Feature extraction for the importance command
// ---------------------------------------------------------------------------

/// Numeric params enter raw (baselines keep out-of-space values), categoricals
/// as 1-based ordinals. Missing numerics fall back to the parameter's lower
/// bound, missing categoricals to ordinal 0.
std::vector<std::vector<double>>
feature_matrix(const std::vector<EvaluationRecord> &records, const ConfigSpace &space) {
  std::vector<std::vector<double>> rows;
  rows.reserve(records.size());
  for (const auto &rec : records) {
    std::vector<double> row;
    row.reserve(space.n_vars());
    for (const auto &p : space.params()) {
      if (p.kind == ParamKind::categorical) {
        double ordinal = 0.0;
        const ParamValue *v = rec.config.find(p.name);
        if (v && std::holds_alternative<std::string>(*v)) {
          const auto &label = std::get<std::string>(*v);
          const auto it = std::find(p.categories.begin(), p.categories.end(), label);
          if (it != p.categories.end())
            ordinal = static_cast<double>(it - p.categories.begin()) + 1.0;
        }
        row.push_back(ordinal);
      } else {
        row.push_back(rec.config.numeric(p.name).value_or(p.lower));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double objective_value(const EvaluationRecord &rec, const std::string &objective) {
  if (objective == "correctness") return rec.objectives.correctness;
  if (objective == "perf_gain") return rec.objectives.perf_gain_pct;
  if (objective == "runtime") return rec.objectives.runtime_s;
  throw ValidationError("unknown objective '" + objective +
                        "' (expected correctness, perf_gain, runtime)");
}

// ---------------------------------------------------------------------------
// Shared CLI argument bundles
// ---------------------------------------------------------------------------

struct CommonArgs {
  std::string space_path;
  std::string ledger_path;
  std::string trace_path;
  bool json = false;
};

struct EvalFlags {
  std::string evaluator_spec = "synthetic";
  std::string trace_path;
  std::string command;
  double timeout_s = 600.0;
  bool external_concurrent_safe = false;

  EvaluatorChoice resolve() const {
    EvaluatorChoice choice;
    apply_evaluator_spec(choice, evaluator_spec);
    if (!trace_path.empty()) choice.trace_path = trace_path;
    if (!command.empty()) choice.command = command;
    choice.timeout_s = timeout_s;
    choice.external_concurrent_safe = external_concurrent_safe;
    return choice;
  }
};

void add_eval_flags(CLI::App *cmd, EvalFlags &flags) {
  cmd->add_option("--evaluator", flags.evaluator_spec,
                  "Evaluation backend: synthetic, replay[:trace], external[:command]")
      ->envname("MOCO_EVALUATOR");
  cmd->add_option("--trace", flags.trace_path, "Replay trace file (JSON array)")
      ->envname("MOCO_TRACE");
  cmd->add_option("--command", flags.command, "External evaluator shell command")
      ->envname("MOCO_COMMAND");
  cmd->add_option("--timeout", flags.timeout_s,
                  "External evaluator timeout in seconds (default 600)");
  cmd->add_flag("--external-concurrent-safe", flags.external_concurrent_safe,
                "Declare the external command safe for concurrent invocations");
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

int cmd_optimize(CLI::App *cmd, const CommonArgs &common, const EvalFlags &eval_flags,
                 const std::string &manifest_path, const std::string &instances_spec,
                 const GAParams &flag_params, double flag_pm,
                 const std::string &ledger_flag, const std::string &baseline_path,
                 const std::string &created_at_flag, const std::string &report_dir_flag,
                 const std::string &reference_spec, double penalty, int parallel) {
  // Precedence: flag / environment (both count as "given" to CLI11) > manifest.
  ordered_json manifest;
  if (!manifest_path.empty()) {
    try {
      manifest = ordered_json::parse(slurp(manifest_path, "manifest"));
    } catch (const Error &) {
      throw;
    } catch (const std::exception &e) {
      throw ValidationError(std::string("manifest parse error: ") + e.what());
    }
    if (!manifest.is_object())
      throw ValidationError("manifest must be a JSON object");
  }
  const auto given = [&](const std::string &name) { return cmd->count(name) > 0; };
  const auto manifest_str = [&](const char *key) -> std::string {
    if (manifest.contains(key) && manifest[key].is_string())
      return manifest[key].get<std::string>();
    return "";
  };

  std::string space_path = given("--space") ? common.space_path : manifest_str("space");
  if (space_path.empty()) space_path = common.space_path;
  std::string ledger_path = given("--ledger") ? ledger_flag : manifest_str("ledger");
  if (ledger_path.empty()) ledger_path = ledger_flag;
  std::string report_dir = given("--report-dir") ? report_dir_flag : manifest_str("report_dir");
  if (report_dir.empty()) report_dir = report_dir_flag;
  std::string baseline = given("--baseline") ? baseline_path : manifest_str("baseline");
  if (baseline.empty()) baseline = baseline_path;

  EvaluatorChoice choice = eval_flags.resolve();
  if (!given("--evaluator") && !manifest_str("evaluator").empty()) {
    EvaluatorChoice from_manifest;
    apply_evaluator_spec(from_manifest, manifest_str("evaluator"));
    choice.kind = from_manifest.kind;
    if (!from_manifest.trace_path.empty() && !given("--trace"))
      choice.trace_path = from_manifest.trace_path;
    if (!from_manifest.command.empty() && !given("--command"))
      choice.command = from_manifest.command;
  }

  std::string instances = instances_spec;
  if (!given("--instances") && manifest.contains("instances")) {
    const auto &mi = manifest["instances"];
    if (mi.is_array()) {
      std::string joined;
      for (const auto &e : mi) {
        if (!joined.empty()) joined += ",";
        joined += e.get<std::string>();
      }
      instances = joined;
    } else if (mi.is_string()) {
      instances = mi.get<std::string>();
    } else {
      instances = std::to_string(mi.get<long long>());
    }
  }

  GAParams params;
  if (manifest.contains("ga_params"))
    params = GAParams::from_json(manifest["ga_params"].dump());
  if (given("--pop")) params.population_size = flag_params.population_size;
  if (given("--gens")) params.generations = flag_params.generations;
  if (given("--seed")) params.seed = flag_params.seed;
  if (given("--pc")) params.crossover_probability = flag_params.crossover_probability;
  if (given("--eta-c")) params.crossover_eta = flag_params.crossover_eta;
  if (given("--pm")) params.mutation_probability = flag_pm;
  if (given("--eta-m")) params.mutation_eta = flag_params.mutation_eta;
  params.check();

  if (ledger_path.empty())
    throw ValidationError("--ledger is required (flag, MOCO_LEDGER, or manifest)");

  const ConfigSpace space = load_space(space_path);
  auto evaluator = make_evaluator(choice, space);

  RunOptions options;
  options.instances = parse_instances(instances);
  if (penalty > 0) options.penalty_runtime_s = penalty;
  if (!reference_spec.empty()) options.reference = parse_reference(reference_spec);
  options.parallel_evals = parallel;
  options.on_generation = [](int gen, std::size_t total) {
    std::cerr << "generation " << gen << ": " << total << " records in the archive\n";
  };

  // Open or create the ledger; a preexisting file is resumed, so its header
  // must describe the same schedule.
  std::unique_ptr<RunLedger> ledger;
  const bool resuming = std::filesystem::exists(ledger_path);
  if (resuming) {
    ledger = std::make_unique<RunLedger>(RunLedger::open_existing(ledger_path));
    const LedgerHeader &h = ledger->header();
    if (h.evaluator != evaluator->label())
      throw LedgerError("ledger was written by evaluator '" + h.evaluator +
                        "', not '" + evaluator->label() + "'");
    if (h.instances != options.instances)
      throw LedgerError("ledger instance list differs from the requested one");
    if (h.penalty_runtime_s != options.penalty_runtime_s)
      throw LedgerError("ledger penalty runtime differs from the requested one");
    const ResumeState st = resume_state(*ledger, params);
    std::cerr << "resuming " << ledger_path << ": " << st.completed_records
              << " records, next generation " << st.next_generation << "\n";
  } else {
    LedgerHeader header;
    header.artifact_version = kVersion;
    header.created_at = created_at_flag.empty() ? now_utc() : created_at_flag;
    header.evaluator = evaluator->label();
    header.ga_params = params;
    header.instances = options.instances;
    header.penalty_runtime_s = options.penalty_runtime_s;
    header.space = space;
    ledger = std::make_unique<RunLedger>(RunLedger::create(ledger_path, header));
  }

  // Out-of-space baselines enter the archive as generation -1, outside the
  // GA population.
  if (!baseline.empty()) {
    Configuration cfg = load_config_file(baseline, space);
    const ValidationResult check = validate(cfg, space, /*baseline_mode=*/true);
    for (const auto &v : check.violations)
      std::cerr << "baseline note: " << v.param << ": " << v.message << "\n";
    if (!ledger->contains(cfg.id)) {
      EvaluationRecord rec;
      rec.config = cfg;
      rec.generation = -1;
      rec.evaluator = evaluator->label();
      rec.label = "baseline";
      try {
        EvalOutput out = evaluator->evaluate(cfg, options.instances);
        rec.per_instance = std::move(out.results);
        rec.objectives = out.aggregate_override ? *out.aggregate_override
                                                : aggregate(rec.per_instance);
        rec.wall_time_s = out.wall_time_s;
        rec.status = EvalStatus::ok;
      } catch (const std::exception &e) {
        std::cerr << "baseline evaluation failed (" << e.what()
                  << "); recording penalty objectives\n";
        rec.objectives = ObjectiveVector{0.0, 0.0, options.penalty_runtime_s};
        rec.status = EvalStatus::failed;
      }
      ledger->append(rec);
    }
  }

  const std::size_t preexisting = ledger->records().size();
  OptimizationResult result = run_nsga2(space, *evaluator, params, *ledger, options);
  const std::size_t new_evals = result.all_records.size() - preexisting;

  const auto hv = member_hv_percent(result.pareto, result.all_records,
                                    result.hypervolume_bounds, options.reference);
  const EvaluationRecord *baseline_rec = find_baseline(result.all_records, "baseline");
  std::size_t dominating = 0;
  if (baseline_rec)
    for (std::size_t idx : result.pareto.member_indices)
      if (dominates(result.all_records[idx].objectives, baseline_rec->objectives))
        ++dominating;

  if (common.json) {
    ordered_json j;
    j["ledger"] = ledger_path;
    j["records"] = result.all_records.size();
    j["new_evaluations"] = new_evals;
    j["instances"] = options.instances;
    j["reference_point"] = options.reference;
    j["per_generation_hypervolume_percent"] = result.per_generation_hypervolume;
    j["pareto"] = ordered_json::parse(
        pareto_front_to_json(result.pareto, result.all_records, space, &hv));
    if (baseline_rec) {
      j["baseline"] = record_name(*baseline_rec);
      j["front_members_dominating_baseline"] = dominating;
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "run complete: " << result.all_records.size() << " records ("
              << new_evals << " new evaluations), ledger " << ledger_path << "\n\n";
    std::cout << "cumulative hypervolume, % of the box above reference ("
              << options.reference[0] << ", " << options.reference[1] << ", "
              << options.reference[2] << "), bounds from the full archive:\n";
    for (std::size_t g = 0; g < result.per_generation_hypervolume.size(); ++g)
      std::cout << "  after generation " << g << ": "
                << fmt(result.per_generation_hypervolume[g]) << "%\n";
    std::cout << "\npareto front (" << result.pareto.member_indices.size() << " of "
              << result.pareto.extracted_from << " records):\n";
    print_front_table(result.pareto, result.all_records, space, hv);
    if (!result.pareto.duplicate_indices.empty())
      std::cout << "note: " << result.pareto.duplicate_indices.size()
                << " record(s) tie a front member's objectives exactly\n";
    if (baseline_rec)
      std::cout << "\nbaseline '" << record_name(*baseline_rec) << "' is dominated by "
                << dominating << " of " << result.pareto.member_indices.size()
                << " front members\n";
  }

  if (!report_dir.empty()) {
    std::filesystem::create_directories(report_dir);
    const auto dir = std::filesystem::path(report_dir);
    write_text_file((dir / "pareto.csv").string(),
                    pareto_front_to_csv(result.pareto, result.all_records, space, &hv));
    write_text_file((dir / "pareto.json").string(),
                    pareto_front_to_json(result.pareto, result.all_records, space, &hv));
    ordered_json hv_json;
    hv_json["per_generation_percent"] = result.per_generation_hypervolume;
    hv_json["final"] = ordered_json::parse(
        hypervolume_report(objectives_of(result.all_records), result.hypervolume_bounds,
                           options.reference)
            .to_json());
    write_text_file((dir / "hypervolume.json").string(), hv_json.dump(2) + "\n");
    std::cerr << "reports written to " << report_dir << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const CommonArgs &common, const EvalFlags &eval_flags,
                 const std::string &config_path, bool trace_all,
                 const std::string &instances_spec, const std::string &label,
                 const std::string &ledger_path, const std::string &created_at_flag) {
  const ConfigSpace space = load_space(common.space_path);
  EvaluatorChoice choice = eval_flags.resolve();
  const std::vector<std::string> instances = parse_instances(instances_spec);

  std::vector<EvaluationRecord> produced;
  if (trace_all) {
    if (choice.kind != "replay" || choice.trace_path.empty())
      throw ValidationError("--trace-all needs --evaluator replay and --trace");
    ReplayTrace trace = ReplayTrace::load(choice.trace_path, space);
    for (const auto &row : trace.rows())
      produced.push_back(record_from_trace_row(row));
  } else {
    if (config_path.empty())
      throw ValidationError("pass --config FILE or --trace-all");
    auto evaluator = make_evaluator(choice, space);
    Configuration cfg = load_config_file(config_path, space);
    const ValidationResult check = validate(cfg, space, /*baseline_mode=*/true);
    for (const auto &v : check.violations)
      std::cerr << "note: " << v.param << ": " << v.message << "\n";
    EvalOutput out = evaluator->evaluate(cfg, instances);
    EvaluationRecord rec;
    rec.config = std::move(cfg);
    rec.per_instance = std::move(out.results);
    rec.objectives =
        out.aggregate_override ? *out.aggregate_override : aggregate(rec.per_instance);
    rec.generation = -1;
    rec.wall_time_s = out.wall_time_s;
    rec.status = EvalStatus::ok;
    rec.evaluator = evaluator->label();
    if (!label.empty())
      rec.label = label;
    else if (out.trace_label)
      rec.label = out.trace_label;
    produced.push_back(std::move(rec));
  }

  if (!ledger_path.empty()) {
    std::unique_ptr<RunLedger> ledger;
    if (std::filesystem::exists(ledger_path)) {
      ledger = std::make_unique<RunLedger>(RunLedger::open_existing(ledger_path));
      if (ledger->header().space_hash != space.content_hash())
        throw LedgerError("ledger space does not match the requested space");
    } else {
      LedgerHeader header;
      header.artifact_version = kVersion;
      header.created_at = created_at_flag.empty() ? now_utc() : created_at_flag;
      header.evaluator = trace_all ? "replay" : choice.kind;
      header.instances = instances;
      header.space = space;
      ledger = std::make_unique<RunLedger>(RunLedger::create(ledger_path, header));
    }
    for (const auto &rec : produced) {
      if (ledger->contains(rec.config.id)) {
        std::cerr << "note: " << rec.config.id << " already in ledger, skipped\n";
        continue;
      }
      ledger->append(rec);
    }
  }

  if (common.json) {
    ordered_json arr = ordered_json::array();
    for (const auto &rec : produced)
      arr.push_back(ordered_json::parse(record_to_json(rec, space)));
    std::cout << arr.dump(2) << "\n";
  } else {
    std::vector<std::vector<std::string>> rows;
    for (const auto &rec : produced)
      rows.push_back({record_name(rec), to_string(rec.status), render_correctness(rec),
                      fmt(rec.objectives.perf_gain_pct),
                      fmt(rec.objectives.runtime_s, 1)});
    print_table({"config", "status", "corr", "perf%", "runtime_s"}, rows);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// pareto
// ---------------------------------------------------------------------------

int cmd_pareto(const CommonArgs &common, const std::string &reference_spec,
               const std::string &csv_path, const std::string &baseline_label) {
  const RecordSet set = load_records(common.ledger_path, common.trace_path,
                                     common.space_path);
  if (set.records.empty())
    throw ValidationError("no records in " + set.source);
  const std::array<double, 3> reference =
      reference_spec.empty() ? kDefaultReference : parse_reference(reference_spec);

  const ParetoFront front = pareto_front(set.records);
  const ObjectiveBounds bounds = induce_bounds(objectives_of(set.records));
  const auto hv = member_hv_percent(front, set.records, bounds, reference);

  const EvaluationRecord *baseline = find_baseline(set.records, baseline_label);
  std::size_t dominating = 0;
  if (baseline)
    for (std::size_t idx : front.member_indices)
      if (dominates(set.records[idx].objectives, baseline->objectives)) ++dominating;

  if (common.json) {
    ordered_json j = ordered_json::parse(
        pareto_front_to_json(front, set.records, set.space, &hv));
    j["reference_point"] = reference;
    j["normalization_bounds"] = {{"correctness", {bounds.min[0], bounds.max[0]}},
                                 {"perf_gain_pct", {bounds.min[1], bounds.max[1]}},
                                 {"runtime_s", {bounds.min[2], bounds.max[2]}}};
    if (baseline) {
      j["baseline"] = record_name(*baseline);
      j["front_members_dominating_baseline"] = dominating;
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "pareto front: " << front.member_indices.size() << " of "
              << front.extracted_from << " records from " << set.source << "\n";
    print_front_table(front, set.records, set.space, hv);
    if (!front.duplicate_indices.empty()) {
      std::cout << "duplicates of front objectives:";
      for (std::size_t idx : front.duplicate_indices)
        std::cout << " " << record_name(set.records[idx]);
      std::cout << "\n";
    }
    if (baseline)
      std::cout << "baseline '" << record_name(*baseline) << "' is dominated by "
                << dominating << " of " << front.member_indices.size()
                << " front members\n";
    print_bounds(bounds);
  }
  if (!csv_path.empty())
    write_text_file(csv_path, pareto_front_to_csv(front, set.records, set.space, &hv));
  return 0;
}

// ---------------------------------------------------------------------------
// hypervolume
// ---------------------------------------------------------------------------

int cmd_hypervolume(const CommonArgs &common, const std::string &labels_spec,
                    const std::string &ids_spec, const std::string &reference_spec,
                    const std::string &bounds_spec) {
  const RecordSet set = load_records(common.ledger_path, common.trace_path,
                                     common.space_path);
  std::vector<EvaluationRecord> selected;
  if (!labels_spec.empty() || !ids_spec.empty()) {
    const auto want_labels = split_commas(labels_spec);
    const auto want_ids = split_commas(ids_spec);
    for (const auto &rec : set.records) {
      const bool by_label =
          rec.label && std::find(want_labels.begin(), want_labels.end(), *rec.label) !=
                           want_labels.end();
      const bool by_id = std::find(want_ids.begin(), want_ids.end(), rec.config.id) !=
                         want_ids.end();
      if (by_label || by_id) selected.push_back(rec);
    }
  } else {
    selected = set.records;
  }
  if (selected.empty())
    throw ValidationError("selection matched no records");

  const std::array<double, 3> reference =
      reference_spec.empty() ? kDefaultReference : parse_reference(reference_spec);
  std::optional<ObjectiveBounds> bounds;
  if (!bounds_spec.empty()) bounds = parse_bounds(bounds_spec);

  const HypervolumeReport report =
      hypervolume_report(objectives_of(selected), bounds, reference);
  if (common.json) {
    std::cout << report.to_json() << "\n";
  } else {
    std::cout << "hypervolume over " << report.front_size << " record(s) from "
              << set.source << "\n";
    std::cout << "  raw volume: " << report.raw_volume << " (full box "
              << report.full_box_volume << ")\n";
    std::cout << "  percent:    " << fmt(report.percent) << "% of the box above ("
              << reference[0] << ", " << reference[1] << ", " << reference[2] << ")\n";
    std::cout << "  ";
    print_bounds(report.normalization_bounds);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// importance
// ---------------------------------------------------------------------------

int cmd_importance(const CommonArgs &common, const std::string &objective,
                   std::size_t trees, std::size_t max_features,
                   std::size_t min_samples_leaf, std::uint64_t forest_seed,
                   const std::string &csv_path) {
  const RecordSet set = load_records(common.ledger_path, common.trace_path,
                                     common.space_path);
  if (set.records.size() < 2)
    throw ValidationError("too few records for importance analysis (need >= 2, have " +
                          std::to_string(set.records.size()) + ")");

  std::vector<std::string> objectives;
  if (objective == "all")
    objectives = {"correctness", "perf_gain", "runtime"};
  else
    objectives = {objective};

  const auto features = feature_matrix(set.records, set.space);
  std::vector<std::string> names;
  for (const auto &p : set.space.params()) names.push_back(p.name);

  ForestParams fp;
  fp.n_trees = trees;
  fp.max_features = max_features;
  fp.min_samples_leaf = min_samples_leaf;
  fp.seed = forest_seed;

  std::vector<ImportanceReport> reports;
  for (const auto &obj : objectives) {
    std::vector<double> targets;
    targets.reserve(set.records.size());
    for (const auto &rec : set.records) targets.push_back(objective_value(rec, obj));
    RegressionForest forest(features, targets, fp);
    const auto imp = forest.feature_importance();
    ImportanceReport report;
    report.objective = obj;
    report.forest_params = forest.params();
    report.sample_count = set.records.size();
    for (std::size_t i = 0; i < names.size(); ++i)
      report.importances[names[i]] = imp[i];
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total == 0.0)
      std::cerr << "warning: objective '" << obj
                << "' produced no splits (constant target?); importances are all zero\n";
    reports.push_back(std::move(report));
  }

  if (common.json) {
    ordered_json arr = ordered_json::array();
    for (const auto &r : reports) arr.push_back(ordered_json::parse(r.to_json()));
    std::cout << arr.dump(2) << "\n";
  } else {
    std::vector<std::string> headers{"hyperparameter"};
    for (const auto &r : reports) headers.push_back(r.objective);
    std::vector<std::vector<std::string>> rows;
    for (const auto &name : names) {
      std::vector<std::string> row{name};
      for (const auto &r : reports) row.push_back(fmt(r.importances.at(name), 4));
      rows.push_back(std::move(row));
    }
    std::cout << "feature importance (mean decrease in impurity, " << trees
              << " trees, " << set.records.size() << " records)\n";
    print_table(headers, rows);
  }
  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv << "hyperparameter";
    for (const auto &r : reports) csv << ',' << r.objective;
    csv << '\n';
    for (const auto &name : names) {
      csv << name;
      for (const auto &r : reports) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), ",%.6f", r.importances.at(name));
        csv << buf;
      }
      csv << '\n';
    }
    write_text_file(csv_path, csv.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// significance
// ---------------------------------------------------------------------------

std::vector<double> load_samples(const std::string &path) {
  const std::string text = slurp(path, "sample file");
  // JSON array or whitespace-separated numbers.
  try {
    const auto j = ordered_json::parse(text);
    if (j.is_array()) return j.get<std::vector<double>>();
  } catch (const std::exception &) {
  }
  std::vector<double> out;
  std::istringstream in(text);
  double v;
  while (in >> v) out.push_back(v);
  if (out.empty())
    throw ValidationError("no numbers found in " + path);
  return out;
}

int cmd_significance(const std::string &base_path, const std::string &patched_path,
                     double alpha, bool json) {
  const auto base = load_samples(base_path);
  const auto patched = load_samples(patched_path);
  const UTestResult res = mann_whitney_u(base, patched);
  const double mean_base =
      std::accumulate(base.begin(), base.end(), 0.0) / static_cast<double>(base.size());
  const double mean_patched = std::accumulate(patched.begin(), patched.end(), 0.0) /
                              static_cast<double>(patched.size());

  std::optional<double> gain;
  if (base.size() >= 2 && patched.size() >= 2 && mean_base > 0)
    gain = significant_gain(base, patched, alpha);

  if (json) {
    ordered_json j;
    j["n1"] = res.n1;
    j["n2"] = res.n2;
    j["u_statistic"] = res.u_statistic;
    j["p_value"] = res.p_value;
    j["method"] = res.method;
    j["alpha"] = alpha;
    j["significant"] = res.p_value < alpha;
    j["mean_base"] = mean_base;
    j["mean_patched"] = mean_patched;
    if (gain) j["gated_gain_pct"] = *gain;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "Mann-Whitney U test (" << res.method << "), n1=" << res.n1
              << " n2=" << res.n2 << "\n";
    std::cout << "  U = " << res.u_statistic << ", two-sided p = " << res.p_value
              << (res.p_value < alpha ? "  (significant at " : "  (not significant at ")
              << alpha << ")\n";
    std::cout << "  mean base = " << mean_base << ", mean patched = " << mean_patched
              << "\n";
    if (gain)
      std::cout << "  gated gain = " << fmt(*gain) << "% (0 unless p < alpha and "
                << "patched mean is lower)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const CommonArgs &common, const EvalFlags &eval_flags,
                 const std::string &instances_spec, const std::string &reference_spec,
                 double penalty, const std::string &baseline_label,
                 const std::string &csv_path) {
  if (common.ledger_path.empty())
    throw ValidationError("--ledger is required");
  const RecordSet set = load_records(common.ledger_path, "", "");
  const std::vector<std::string> held_out = parse_instances(instances_spec);
  const std::array<double, 3> reference =
      reference_spec.empty() ? kDefaultReference : parse_reference(reference_spec);

  const ParetoFront front = pareto_front(set.records);
  std::vector<const EvaluationRecord *> members;
  for (std::size_t idx : front.member_indices) members.push_back(&set.records[idx]);
  const EvaluationRecord *baseline = find_baseline(set.records, baseline_label);
  if (baseline && std::find(members.begin(), members.end(), baseline) == members.end())
    members.push_back(baseline);

  auto evaluator = make_evaluator(eval_flags.resolve(), set.space);
  std::vector<EvaluationRecord> validated;
  for (const EvaluationRecord *src : members) {
    EvaluationRecord rec;
    rec.config = src->config;
    rec.label = src->label;
    rec.generation = -1;
    rec.evaluator = evaluator->label();
    try {
      EvalOutput out = evaluator->evaluate(src->config, held_out);
      rec.per_instance = std::move(out.results);
      rec.objectives = out.aggregate_override ? *out.aggregate_override
                                              : aggregate(rec.per_instance);
      rec.wall_time_s = out.wall_time_s;
      rec.status = EvalStatus::ok;
    } catch (const std::exception &e) {
      std::cerr << "validation of " << record_name(*src) << " failed: " << e.what()
                << "\n";
      rec.objectives = ObjectiveVector{0.0, 0.0, penalty};
      rec.status = EvalStatus::failed;
    }
    validated.push_back(std::move(rec));
  }

  const ObjectiveBounds bounds = induce_bounds(objectives_of(validated));
  std::vector<double> vhv;
  for (const auto &rec : validated) {
    std::vector<ObjectiveVector> one{rec.objectives};
    vhv.push_back(hypervolume_report(one, bounds, reference).percent);
  }

  if (common.json) {
    ordered_json j;
    j["held_out_instances"] = held_out;
    j["reference_point"] = reference;
    j["normalization_bounds"] = {{"correctness", {bounds.min[0], bounds.max[0]}},
                                 {"perf_gain_pct", {bounds.min[1], bounds.max[1]}},
                                 {"runtime_s", {bounds.min[2], bounds.max[2]}}};
    j["rows"] = ordered_json::array();
    for (std::size_t i = 0; i < validated.size(); ++i) {
      const auto &rec = validated[i];
      ordered_json row;
      row["config"] = record_name(rec);
      row["config_id"] = rec.config.id;
      row["status"] = to_string(rec.status);
      row["objectives"] = {{"correctness", rec.objectives.correctness},
                           {"perf_gain_pct", rec.objectives.perf_gain_pct},
                           {"runtime_s", rec.objectives.runtime_s}};
      row["correctness_display"] = render_correctness(rec);
      row["vhv_percent"] = vhv[i];
      j["rows"].push_back(std::move(row));
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "validation on " << held_out.size() << " held-out instance(s), "
              << validated.size() << " configuration(s)\n";
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < validated.size(); ++i) {
      const auto &rec = validated[i];
      rows.push_back({record_name(rec), to_string(rec.status), render_correctness(rec),
                      fmt(rec.objectives.perf_gain_pct),
                      fmt(rec.objectives.runtime_s, 1), fmt(vhv[i])});
    }
    print_table({"config", "status", "corr", "perf%", "runtime_s", "vhv%"}, rows);
    print_bounds(bounds);
  }

  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv << "config,status,correctness,perf_gain_pct,runtime_s,vhv_percent\n";
    for (std::size_t i = 0; i < validated.size(); ++i) {
      const auto &rec = validated[i];
      char buf[128];
      std::snprintf(buf, sizeof(buf), ",%s,%s,%.4f,%.4f,%.4f\n",
                    to_string(rec.status).c_str(), render_correctness(rec).c_str(),
                    rec.objectives.perf_gain_pct, rec.objectives.runtime_s, vhv[i]);
      csv << record_name(rec) << buf;
    }
    write_text_file(csv_path, csv.str());
  }
  return 0;
}

} // namespace

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

int main(int argc, char **argv) {
  CLI::App app{"Multi-objective configuration optimization toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int rc = 0;

  // -- optimize -------------------------------------------------------------
  auto *opt = app.add_subcommand("optimize", "Run the NSGA-II loop and write a ledger");
  CommonArgs opt_common;
  EvalFlags opt_eval;
  std::string opt_manifest, opt_instances = "9", opt_ledger, opt_baseline;
  std::string opt_created_at, opt_report_dir, opt_reference;
  GAParams opt_params;
  double opt_pm = -1.0, opt_penalty = -1.0;
  int opt_parallel = 1;
  opt->add_option("--manifest", opt_manifest, "Run manifest JSON (lowest precedence)");
  opt->add_option("--space", opt_common.space_path, "Space definition JSON (default: built-in)")
      ->envname("MOCO_SPACE");
  add_eval_flags(opt, opt_eval);
  opt->add_option("--instances", opt_instances,
                  "Instance count N (ids inst-1..inst-N) or comma list of ids")
      ->envname("MOCO_INSTANCES");
  opt->add_option("--pop", opt_params.population_size, "Population size (default 5)")
      ->envname("MOCO_POP");
  opt->add_option("--gens", opt_params.generations, "Offspring generations (default 5)")
      ->envname("MOCO_GENS");
  opt->add_option("--seed", opt_params.seed, "Master random seed")->envname("MOCO_SEED");
  opt->add_option("--pc", opt_params.crossover_probability,
                  "Crossover probability (default 0.9)");
  opt->add_option("--eta-c", opt_params.crossover_eta,
                  "Crossover distribution index (default 15)");
  opt->add_option("--pm", opt_pm, "Mutation probability (default 1/n_vars)");
  opt->add_option("--eta-m", opt_params.mutation_eta,
                  "Mutation distribution index (default 20)");
  opt->add_option("--ledger", opt_ledger, "Ledger output path (resumes if it exists)")
      ->envname("MOCO_LEDGER");
  opt->add_option("--baseline", opt_baseline,
                  "Config JSON evaluated and recorded as generation -1")
      ->envname("MOCO_BASELINE");
  opt->add_option("--penalty", opt_penalty,
                  "Runtime seconds recorded for failed evaluations (default 3600)");
  opt->add_option("--parallel-evals", opt_parallel,
                  "Concurrent evaluator calls (honored only for concurrent-safe evaluators)")
      ->envname("MOCO_PARALLEL_EVALS");
  opt->add_option("--reference", opt_reference,
                  "Hypervolume reference point r0,r1,r2 (default -0.1,-0.1,-0.1)")
      ->envname("MOCO_REFERENCE");
  opt->add_option("--created-at", opt_created_at,
                  "Header timestamp (default: current UTC time)")
      ->envname("MOCO_CREATED_AT");
  opt->add_option("--report-dir", opt_report_dir, "Directory for CSV/JSON reports");
  opt->add_flag("--json", opt_common.json, "Machine-readable output");
  opt->callback([&] {
    rc = cmd_optimize(opt, opt_common, opt_eval, opt_manifest, opt_instances,
                      opt_params, opt_pm, opt_ledger, opt_baseline, opt_created_at,
                      opt_report_dir, opt_reference, opt_penalty, opt_parallel);
  });

  // -- evaluate ---------------------------------------------------------------
  auto *ev = app.add_subcommand("evaluate", "Evaluate one configuration (or a whole trace)");
  CommonArgs ev_common;
  EvalFlags ev_eval;
  std::string ev_config, ev_instances = "9", ev_label, ev_ledger, ev_created_at;
  bool ev_trace_all = false;
  ev->add_option("--space", ev_common.space_path, "Space definition JSON")
      ->envname("MOCO_SPACE");
  add_eval_flags(ev, ev_eval);
  ev->add_option("--config", ev_config, "Configuration JSON file");
  ev->add_flag("--trace-all", ev_trace_all, "Record every row of the replay trace");
  ev->add_option("--instances", ev_instances, "Instance count or comma list")
      ->envname("MOCO_INSTANCES");
  ev->add_option("--label", ev_label, "Label stored with the record");
  ev->add_option("--ledger", ev_ledger, "Append results to this ledger (created if missing)")
      ->envname("MOCO_LEDGER");
  ev->add_option("--created-at", ev_created_at, "Header timestamp for a new ledger")
      ->envname("MOCO_CREATED_AT");
  ev->add_flag("--json", ev_common.json, "Machine-readable output");
  ev->callback([&] {
    rc = cmd_evaluate(ev_common, ev_eval, ev_config, ev_trace_all, ev_instances,
                      ev_label, ev_ledger, ev_created_at);
  });

  // -- pareto -----------------------------------------------------------------
  auto *pa = app.add_subcommand("pareto", "Extract the non-dominated set from a ledger or trace");
  CommonArgs pa_common;
  std::string pa_reference, pa_csv, pa_baseline_label = "baseline";
  pa->add_option("--ledger", pa_common.ledger_path, "Ledger to read")->envname("MOCO_LEDGER");
  pa->add_option("--trace", pa_common.trace_path, "Replay trace to read instead")
      ->envname("MOCO_TRACE");
  pa->add_option("--space", pa_common.space_path, "Space JSON (traces only)")
      ->envname("MOCO_SPACE");
  pa->add_option("--reference", pa_reference, "Reference point for per-member hv%")
      ->envname("MOCO_REFERENCE");
  pa->add_option("--baseline-label", pa_baseline_label,
                 "Record label treated as the comparison baseline");
  pa->add_option("--csv", pa_csv, "Write the front as CSV to this path");
  pa->add_flag("--json", pa_common.json, "Machine-readable output");
  pa->callback([&] {
    rc = cmd_pareto(pa_common, pa_reference, pa_csv, pa_baseline_label);
  });

  // -- hypervolume --------------------------------------------------------------
  auto *hv = app.add_subcommand("hypervolume", "Hypervolume of a record selection");
  CommonArgs hv_common;
  std::string hv_labels, hv_ids, hv_reference, hv_bounds;
  hv->add_option("--ledger", hv_common.ledger_path, "Ledger to read")->envname("MOCO_LEDGER");
  hv->add_option("--trace", hv_common.trace_path, "Replay trace to read instead")
      ->envname("MOCO_TRACE");
  hv->add_option("--space", hv_common.space_path, "Space JSON (traces only)")
      ->envname("MOCO_SPACE");
  hv->add_option("--labels", hv_labels, "Select records by label (comma list)");
  hv->add_option("--ids", hv_ids, "Select records by configuration id (comma list)");
  hv->add_option("--reference", hv_reference, "Reference point r0,r1,r2")
      ->envname("MOCO_REFERENCE");
  hv->add_option("--bounds", hv_bounds,
                 "Explicit normalization bounds c_min,c_max,p_min,p_max,rt_min,rt_max")
      ->envname("MOCO_BOUNDS");
  hv->add_flag("--json", hv_common.json, "Machine-readable output");
  hv->callback([&] {
    rc = cmd_hypervolume(hv_common, hv_labels, hv_ids, hv_reference, hv_bounds);
  });

  // -- importance ---------------------------------------------------------------
  auto *im = app.add_subcommand("importance", "Regression-forest feature importance");
  CommonArgs im_common;
  std::string im_objective = "all", im_csv;
  std::size_t im_trees = 200, im_max_features = 0, im_min_leaf = 1;
  std::uint64_t im_seed = 0;
  im->add_option("--ledger", im_common.ledger_path, "Ledger to read")->envname("MOCO_LEDGER");
  im->add_option("--trace", im_common.trace_path, "Replay trace to read instead")
      ->envname("MOCO_TRACE");
  im->add_option("--space", im_common.space_path, "Space JSON (traces only)")
      ->envname("MOCO_SPACE");
  im->add_option("--objective", im_objective,
                 "correctness, perf_gain, runtime, or all (default all)");
  im->add_option("--trees", im_trees, "Number of trees (default 200)");
  im->add_option("--max-features", im_max_features,
                 "Features per split (default ceil(p/3))");
  im->add_option("--min-leaf", im_min_leaf, "Minimum samples per leaf (default 1)");
  im->add_option("--forest-seed", im_seed, "Forest random seed");
  im->add_option("--csv", im_csv, "Write the importance table as CSV to this path");
  im->add_flag("--json", im_common.json, "Machine-readable output");
  im->callback([&] {
    rc = cmd_importance(im_common, im_objective, im_trees, im_max_features, im_min_leaf,
                        im_seed, im_csv);
  });

  // -- significance ----------------------------------------------------------------
  auto *sig = app.add_subcommand("significance",
                                 "Mann-Whitney U test between two sample files");
  std::string sig_base, sig_patched;
  double sig_alpha = 0.1;
  bool sig_json = false;
  sig->add_option("base", sig_base, "Baseline samples (JSON array or whitespace numbers)")
      ->required();
  sig->add_option("patched", sig_patched, "Comparison samples")->required();
  sig->add_option("--alpha", sig_alpha, "Significance threshold (default 0.1)")
      ->envname("MOCO_ALPHA");
  sig->add_flag("--json", sig_json, "Machine-readable output");
  sig->callback([&] { rc = cmd_significance(sig_base, sig_patched, sig_alpha, sig_json); });

  // -- validate ---------------------------------------------------------------------
  auto *va = app.add_subcommand("validate",
                                "Re-evaluate the pareto front on held-out instances");
  CommonArgs va_common;
  EvalFlags va_eval;
  std::string va_instances, va_reference, va_csv, va_baseline_label = "baseline";
  double va_penalty = 3600.0;
  va->add_option("--ledger", va_common.ledger_path, "Source ledger")
      ->envname("MOCO_LEDGER")
      ->required();
  add_eval_flags(va, va_eval);
  va->add_option("--instances", va_instances, "Held-out instance count or comma list")
      ->envname("MOCO_INSTANCES")
      ->required();
  va->add_option("--reference", va_reference, "Reference point r0,r1,r2")
      ->envname("MOCO_REFERENCE");
  va->add_option("--penalty", va_penalty,
                 "Runtime seconds recorded for failed validations (default 3600)");
  va->add_option("--baseline-label", va_baseline_label,
                 "Record label treated as the comparison baseline");
  va->add_option("--csv", va_csv, "Write validation rows as CSV to this path");
  va->add_flag("--json", va_common.json, "Machine-readable output");
  va->callback([&] {
    rc = cmd_validate(va_common, va_eval, va_instances, va_reference, va_penalty,
                      va_baseline_label, va_csv);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  } catch (const TraceError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ProtocolError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
