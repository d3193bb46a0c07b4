#include "moco/persistence.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

namespace moco {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json instance_result_json(const InstanceResult &r) {
  ordered_json j;
  j["instance_id"] = r.instance_id;
  j["passed"] = r.passed;
  j["agent_runtime_s"] = r.agent_runtime_s;
  if (r.base_runtimes_s) j["base_runtimes_s"] = *r.base_runtimes_s;
  if (r.patched_runtimes_s) j["patched_runtimes_s"] = *r.patched_runtimes_s;
  return j;
}

InstanceResult instance_result_parse(const ordered_json &j) {
  InstanceResult r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.passed = j.at("passed").get<bool>();
  r.agent_runtime_s = j.value("agent_runtime_s", 0.0);
  if (j.contains("base_runtimes_s"))
    r.base_runtimes_s = j["base_runtimes_s"].get<std::vector<double>>();
  if (j.contains("patched_runtimes_s"))
    r.patched_runtimes_s = j["patched_runtimes_s"].get<std::vector<double>>();
  return r;
}

} // namespace

std::string record_to_json(const EvaluationRecord &rec, const ConfigSpace &space) {
  ordered_json j;
  j["config"] = ordered_json::parse(configuration_to_json(rec.config, space));
  if (rec.label) j["label"] = *rec.label;
  j["generation"] = rec.generation;
  j["status"] = to_string(rec.status);
  j["evaluator"] = rec.evaluator;
  j["objectives"] = {{"correctness", rec.objectives.correctness},
                     {"perf_gain_pct", rec.objectives.perf_gain_pct},
                     {"runtime_s", rec.objectives.runtime_s}};
  j["wall_time_s"] = rec.wall_time_s;
  j["per_instance"] = ordered_json::array();
  for (const auto &r : rec.per_instance)
    j["per_instance"].push_back(instance_result_json(r));
  return j.dump();
}

EvaluationRecord record_from_json(const std::string &text, const ConfigSpace &space) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw LedgerError(std::string("record parse error: ") + e.what());
  }
  EvaluationRecord rec;
  rec.config = configuration_from_json(j.at("config").dump(), space);
  if (j.contains("label")) rec.label = j["label"].get<std::string>();
  rec.generation = j.at("generation").get<int>();
  rec.status = eval_status_from_string(j.at("status").get<std::string>());
  rec.evaluator = j.value("evaluator", "");
  const auto &obj = j.at("objectives");
  rec.objectives.correctness = obj.at("correctness").get<double>();
  rec.objectives.perf_gain_pct = obj.at("perf_gain_pct").get<double>();
  rec.objectives.runtime_s = obj.at("runtime_s").get<double>();
  rec.wall_time_s = j.value("wall_time_s", 0.0);
  if (j.contains("per_instance"))
    for (const auto &r : j["per_instance"])
      rec.per_instance.push_back(instance_result_parse(r));
  return rec;
}

std::string LedgerHeader::to_json() const {
  ordered_json j;
  j["format_version"] = format_version;
  j["artifact_version"] = artifact_version;
  j["created_at"] = created_at;
  j["evaluator"] = evaluator;
  j["ga_params"] = ordered_json::parse(ga_params.to_json());
  j["instances"] = instances;
  j["penalty_runtime_s"] = penalty_runtime_s;
  j["rng_scheme"] = "mt19937_64; stream per (seed, generation, phase) via seed_seq";
  j["space_hash"] = space.content_hash();
  j["space"] = ordered_json::parse(space.to_json());
  return j.dump();
}

LedgerHeader LedgerHeader::from_json(const std::string &text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw LedgerError(std::string("ledger header parse error: ") + e.what());
  }
  LedgerHeader h;
  if (!j.contains("format_version"))
    throw LedgerError("ledger header missing format_version");
  h.format_version = j["format_version"].get<int>();
  if (h.format_version != 1)
    throw LedgerError("unsupported ledger format_version " +
                      std::to_string(h.format_version));
  h.artifact_version = j.value("artifact_version", "");
  h.created_at = j.value("created_at", "");
  h.evaluator = j.value("evaluator", "");
  h.ga_params = GAParams::from_json(j.at("ga_params").dump());
  if (j.contains("instances"))
    h.instances = j["instances"].get<std::vector<std::string>>();
  h.penalty_runtime_s = j.value("penalty_runtime_s", 3600.0);
  h.space = ConfigSpace::from_json(j.at("space").dump());
  h.space_hash = j.value("space_hash", "");
  if (!h.space_hash.empty() && h.space_hash != h.space.content_hash())
    throw LedgerError("ledger space_hash does not match the stored space");
  return h;
}

namespace {

void write_line(std::FILE *f, const std::string &line, const std::string &path) {
  if (std::fwrite(line.data(), 1, line.size(), f) != line.size() ||
      std::fputc('\n', f) == EOF || std::fflush(f) != 0 ||
      ::fsync(fileno(f)) != 0)
    throw LedgerError("ledger write failure on " + path + ": " +
                      std::strerror(errno));
}

} // namespace

RunLedger RunLedger::create(const std::string &path, LedgerHeader header) {
  {
    std::ifstream probe(path);
    if (probe.good())
      throw LedgerError("ledger already exists: " + path);
  }
  header.space_hash = header.space.content_hash();
  RunLedger ledger;
  ledger.path_ = path;
  ledger.header_ = std::move(header);
  ledger.out_.reset(std::fopen(path.c_str(), "wb"));
  if (!ledger.out_)
    throw LedgerError("cannot create ledger " + path + ": " + std::strerror(errno));
  write_line(ledger.out_.get(), ledger.header_.to_json(), path);
  return ledger;
}

namespace {

struct ParsedFile {
  LedgerHeader header;
  std::vector<EvaluationRecord> records;
  std::size_t partial_lines = 0;
  long complete_bytes = 0; // offset just past the last complete record line
};

ParsedFile parse_ledger_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw LedgerError("cannot open ledger: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  ParsedFile out;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    const std::size_t line_end = complete ? nl + 1 : text.size();
    if (line.empty()) {
      pos = line_end;
      continue;
    }
    if (!have_header) {
      if (!complete)
        throw LedgerError("ledger header line is incomplete: " + path);
      out.header = LedgerHeader::from_json(line);
      have_header = true;
      out.complete_bytes = static_cast<long>(line_end);
    } else {
      bool is_last_line = line_end >= text.size();
      try {
        out.records.push_back(record_from_json(line, out.header.space));
        out.complete_bytes = static_cast<long>(line_end);
      } catch (const Error &) {
        // A torn final line (crash mid-append) is expected and dropped;
        // damage anywhere else is corruption.
        if (!is_last_line) throw;
        ++out.partial_lines;
      }
    }
    pos = line_end;
  }
  if (!have_header)
    throw LedgerError("ledger has no header line: " + path);
  return out;
}

} // namespace

RunLedger RunLedger::open_existing(const std::string &path) {
  ParsedFile parsed = parse_ledger_file(path);
  if (parsed.partial_lines > 0) {
    if (::truncate(path.c_str(), parsed.complete_bytes) != 0)
      throw LedgerError("cannot drop partial trailing line of " + path + ": " +
                        std::strerror(errno));
  }
  RunLedger ledger;
  ledger.path_ = path;
  ledger.header_ = std::move(parsed.header);
  ledger.records_ = std::move(parsed.records);
  ledger.partial_lines_ = parsed.partial_lines;
  for (std::size_t i = 0; i < ledger.records_.size(); ++i) {
    const std::string &id = ledger.records_[i].config.id;
    if (!ledger.by_id_.emplace(id, i).second)
      throw LedgerError("ledger holds duplicate configuration id " + id);
  }
  ledger.out_.reset(std::fopen(path.c_str(), "ab"));
  if (!ledger.out_)
    throw LedgerError("cannot reopen ledger for append: " + path);
  return ledger;
}

RunLedger RunLedger::load(const std::string &path) {
  ParsedFile parsed = parse_ledger_file(path);
  RunLedger ledger;
  ledger.path_ = path;
  ledger.header_ = std::move(parsed.header);
  ledger.records_ = std::move(parsed.records);
  ledger.partial_lines_ = parsed.partial_lines;
  for (std::size_t i = 0; i < ledger.records_.size(); ++i) {
    const std::string &id = ledger.records_[i].config.id;
    if (!ledger.by_id_.emplace(id, i).second)
      throw LedgerError("ledger holds duplicate configuration id " + id);
  }
  return ledger;
}

bool RunLedger::contains(const std::string &config_id) const {
  return by_id_.count(config_id) > 0;
}

const EvaluationRecord *RunLedger::find(const std::string &config_id) const {
  auto it = by_id_.find(config_id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

void RunLedger::append(const EvaluationRecord &rec) {
  if (!out_)
    throw LedgerError("ledger opened read-only: " + path_);
  if (contains(rec.config.id))
    throw LedgerError("duplicate configuration id " + rec.config.id);
  write_line(out_.get(), record_to_json(rec, header_.space), path_);
  by_id_.emplace(rec.config.id, records_.size());
  records_.push_back(rec);
}

ResumeState resume_state(const RunLedger &ledger, const GAParams &params) {
  if (ledger.header().ga_params.to_json() != params.to_json())
    throw LedgerError("ledger ga_params do not match the requested run");
  ResumeState st;
  st.completed_records = ledger.records().size();
  int max_gen = -1;
  bool any_ga_record = false;
  for (const auto &rec : ledger.records()) {
    if (rec.generation >= 0) {
      any_ga_record = true;
      max_gen = std::max(max_gen, rec.generation);
    }
  }
  st.next_generation = any_ga_record ? max_gen + 1 : 0;
  return st;
}

} // namespace moco
