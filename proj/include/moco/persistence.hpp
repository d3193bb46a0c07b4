#pragma once

#include <cstdio>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "moco/errors.hpp"
#include "moco/evaluation.hpp"
#include "moco/ga_params.hpp"
#include "moco/search_space.hpp"

namespace moco {

std::string record_to_json(const EvaluationRecord &rec, const ConfigSpace &space);
EvaluationRecord record_from_json(const std::string &text, const ConfigSpace &space);

/// Line 1 of every ledger file. created_at is caller-supplied so reruns can
/// be byte-identical.
struct LedgerHeader {
  int format_version = 1;
  std::string artifact_version;
  std::string created_at;
  std::string evaluator;
  GAParams ga_params;
  std::vector<std::string> instances;
  double penalty_runtime_s = 3600.0;
  ConfigSpace space;
  std::string space_hash; // filled from space on write

  std::string to_json() const;
  static LedgerHeader from_json(const std::string &text);
};

/// Append-only line-delimited JSON run log. One header line, then one line
/// per evaluation, flushed and fsynced per append. Configuration ids are
/// unique per ledger.
class RunLedger {
public:
  /// Creates a fresh ledger; refuses to overwrite an existing file.
  static RunLedger create(const std::string &path, LedgerHeader header);

  /// Opens for append: loads all complete records, drops a partial trailing
  /// line (truncating it away so later appends stay well-formed).
  static RunLedger open_existing(const std::string &path);

  /// Read-only load; append() on the result throws.
  static RunLedger load(const std::string &path);

  const LedgerHeader &header() const { return header_; }
  const std::vector<EvaluationRecord> &records() const { return records_; }
  const std::string &path() const { return path_; }
  std::size_t partial_lines_ignored() const { return partial_lines_; }

  bool contains(const std::string &config_id) const;
  const EvaluationRecord *find(const std::string &config_id) const;

  /// Serializes, writes, flushes and fsyncs one record. Throws LedgerError on
  /// duplicate configuration id, read-only ledger, or storage failure.
  void append(const EvaluationRecord &rec);

private:
  RunLedger() = default;

  struct FileCloser {
    void operator()(std::FILE *f) const {
      if (f) std::fclose(f);
    }
  };

  std::string path_;
  LedgerHeader header_;
  std::vector<EvaluationRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t partial_lines_ = 0;
  std::unique_ptr<std::FILE, FileCloser> out_;
};

/// Where a resumed run picks up: informational, since resumption replays the
/// deterministic schedule from generation 0 and skips ids the ledger already
/// holds. Throws LedgerError when ga_params differ from the header.
struct ResumeState {
  int next_generation = 0;
  std::size_t completed_records = 0;
};

ResumeState resume_state(const RunLedger &ledger, const GAParams &params);

} // namespace moco
