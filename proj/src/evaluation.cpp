#include "moco/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "moco/analysis.hpp"

namespace moco {

using ordered_json = nlohmann::ordered_json;

std::string to_string(EvalStatus s) { return s == EvalStatus::ok ? "ok" : "failed"; }

EvalStatus eval_status_from_string(const std::string &s) {
  if (s == "ok") return EvalStatus::ok;
  if (s == "failed") return EvalStatus::failed;
  throw ValidationError("unknown evaluation status: " + s);
}

std::optional<std::pair<std::size_t, std::size_t>> EvaluationRecord::pass_counts() const {
  if (per_instance.empty()) return std::nullopt;
  std::size_t passed = 0;
  for (const auto &r : per_instance)
    if (r.passed) ++passed;
  return std::make_pair(passed, per_instance.size());
}

namespace {

void check_runtime_lists(const InstanceResult &r) {
  const bool has_base = r.base_runtimes_s.has_value();
  const bool has_patched = r.patched_runtimes_s.has_value();
  if (has_base != has_patched)
    throw ValidationError("instance " + r.instance_id +
                          ": base and patched runtime lists must come together");
  if (!has_base) return;
  const auto &base = *r.base_runtimes_s;
  const auto &patched = *r.patched_runtimes_s;
  if (base.size() != patched.size())
    throw ValidationError("instance " + r.instance_id + ": runtime list length mismatch");
  if (base.size() < 2)
    throw ValidationError("instance " + r.instance_id + ": runtime list < 2");
  for (double v : base)
    if (!(v > 0.0))
      throw ValidationError("instance " + r.instance_id + ": non-positive base runtime");
  for (double v : patched)
    if (!(v > 0.0))
      throw ValidationError("instance " + r.instance_id + ": non-positive patched runtime");
}

} // namespace

ObjectiveVector aggregate(const std::vector<InstanceResult> &results) {
  if (results.empty())
    throw ValidationError("aggregate: no instance results");
  const double n = static_cast<double>(results.size());
  std::size_t passed = 0;
  double runtime_sum = 0.0;
  double gain_sum = 0.0;
  for (const auto &r : results) {
    check_runtime_lists(r);
    if (r.passed) ++passed;
    runtime_sum += r.agent_runtime_s;
    if (r.passed && r.base_runtimes_s)
      gain_sum += significant_gain(*r.base_runtimes_s, *r.patched_runtimes_s, 0.1);
  }
  ObjectiveVector v;
  v.correctness = static_cast<double>(passed) / n;
  v.perf_gain_pct = gain_sum / n;
  v.runtime_s = runtime_sum / n;
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic agent model
// ---------------------------------------------------------------------------

namespace {

double clamp_numeric(const Configuration &config, const ParamSpec &p) {
  auto v = config.numeric(p.name);
  double x = v.value_or(p.lower);
  return std::min(p.upper, std::max(p.lower, x));
}

// Template ordinal (1-based category index); missing or unknown labels clamp
// to the first category.
double clamp_ordinal(const Configuration &config, const ParamSpec &p) {
  const ParamValue *v = config.find(p.name);
  if (v && std::holds_alternative<std::string>(*v)) {
    auto it = std::find(p.categories.begin(), p.categories.end(), std::get<std::string>(*v));
    if (it != p.categories.end())
      return static_cast<double>(it - p.categories.begin()) + 1.0;
  }
  if (v) {
    if (auto num = config.numeric(p.name)) {
      for (std::size_t i = 0; i < p.categories.size(); ++i)
        if (p.categories[i] == std::to_string(static_cast<long long>(*num)))
          return static_cast<double>(i) + 1.0;
    }
  }
  return 1.0;
}

struct SyntheticInputs {
  double t, p, m, s, c, e, l, r;
};

SyntheticInputs clamped_inputs(const Configuration &config) {
  static const ConfigSpace space = default_space();
  SyntheticInputs in{};
  in.t = clamp_numeric(config, *space.find("temperature"));
  in.p = clamp_numeric(config, *space.find("top_p"));
  in.m = clamp_numeric(config, *space.find("max_tokens"));
  in.s = clamp_numeric(config, *space.find("step_limit"));
  in.c = clamp_numeric(config, *space.find("cost_limit"));
  in.e = clamp_numeric(config, *space.find("env_timeout"));
  in.l = clamp_numeric(config, *space.find("llm_timeout"));
  in.r = clamp_ordinal(config, *space.find("prompt_template"));
  return in;
}

} // namespace

double synthetic_quality(const Configuration &config) {
  SyntheticInputs in = clamped_inputs(config);
  return 12.0 - 40.0 * (in.t - 0.65) * (in.t - 0.65) -
         10.0 * (in.p - 0.4) * (in.p - 0.4) - 0.5 * std::abs(in.r - 3.0);
}

double synthetic_runtime_s(const Configuration &config) {
  SyntheticInputs in = clamped_inputs(config);
  return 400.0 + 10.0 * in.s + 5.0 * (in.e + in.l) + 0.05 * in.m;
}

EvalOutput SyntheticEvaluator::evaluate(const Configuration &config,
                                        const std::vector<std::string> &instances) {
  const double runtime = synthetic_runtime_s(config);
  const double q = synthetic_quality(config);
  EvalOutput out;
  out.results.reserve(instances.size());
  for (std::size_t pos = 0; pos < instances.size(); ++pos) {
    const auto i = static_cast<std::uint64_t>(pos) + 1;
    const double threshold = 2.0 + 0.8 * static_cast<double>((i * 7919ull) % 5ull);
    InstanceResult r;
    r.instance_id = instances[pos];
    r.passed = q > threshold;
    r.agent_runtime_s = runtime;
    const double gain = r.passed ? std::max(0.0, q) : 0.0;
    std::vector<double> base(20, 10.0);
    std::vector<double> patched(20);
    for (int k = 1; k <= 20; ++k) {
      const double sign = (k % 2 == 1) ? 1.0 : -1.0;
      patched[static_cast<std::size_t>(k - 1)] =
          10.0 * (1.0 - gain / 100.0) + sign * 0.001 * k;
    }
    r.base_runtimes_s = std::move(base);
    r.patched_runtimes_s = std::move(patched);
    out.results.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replay traces
// ---------------------------------------------------------------------------

namespace {

InstanceResult instance_result_from_json(const ordered_json &j) {
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

ObjectiveVector objectives_from_json(const ordered_json &j) {
  ObjectiveVector v;
  if (j.contains("passed") && j.contains("instances")) {
    v.correctness = static_cast<double>(j["passed"].get<std::int64_t>()) /
                    static_cast<double>(j["instances"].get<std::int64_t>());
  } else {
    v.correctness = j.at("correctness").get<double>();
  }
  v.perf_gain_pct = j.at("perf_gain_pct").get<double>();
  v.runtime_s = j.at("runtime_s").get<double>();
  return v;
}

} // namespace

ReplayTrace ReplayTrace::load(const std::string &path, const ConfigSpace &space) {
  std::ifstream in(path);
  if (!in)
    throw TraceError("cannot open trace file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), space);
}

ReplayTrace ReplayTrace::parse(const std::string &text, const ConfigSpace &space) {
  ordered_json arr;
  try {
    arr = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw TraceError(std::string("trace JSON parse error: ") + e.what());
  }
  if (!arr.is_array())
    throw TraceError("trace must be a JSON array of rows");
  ReplayTrace trace;
  for (const auto &row : arr) {
    TraceRow tr;
    tr.trace_label = row.value("label", "");
    if (!row.contains("config"))
      throw TraceError("trace row missing config");
    tr.config = configuration_from_json(row["config"].dump(), space);
    if (row.contains("objectives"))
      tr.objectives = objectives_from_json(row["objectives"]);
    if (row.contains("results"))
      for (const auto &r : row["results"])
        tr.results.push_back(instance_result_from_json(r));
    if (!tr.objectives && tr.results.empty())
      throw TraceError("trace row '" + tr.trace_label + "' has neither objectives nor results");
    trace.rows_.push_back(std::move(tr));
  }
  return trace;
}

const TraceRow *ReplayTrace::find_by_id(const std::string &config_id) const {
  for (const auto &r : rows_)
    if (r.config.id == config_id) return &r;
  return nullptr;
}

const TraceRow *ReplayTrace::find_by_label(const std::string &trace_label) const {
  for (const auto &r : rows_)
    if (r.trace_label == trace_label) return &r;
  return nullptr;
}

EvalOutput ReplayEvaluator::evaluate(const Configuration &config,
                                     const std::vector<std::string> &instances) {
  (void)instances; // stored results are returned verbatim
  const TraceRow *row = trace_.find_by_id(config.id);
  if (!row)
    throw TraceError("configuration " + config.id + " not in trace");
  EvalOutput out;
  out.results = row->results;
  out.aggregate_override = row->objectives;
  if (!row->trace_label.empty()) out.trace_label = row->trace_label;
  return out;
}

// ---------------------------------------------------------------------------
// External command evaluator
// ---------------------------------------------------------------------------

ExternalEvaluator::ExternalEvaluator(std::string command, const ConfigSpace &space,
                                     double timeout_s, bool concurrent_safe)
    : command_(std::move(command)), space_(space), timeout_s_(timeout_s),
      concurrent_safe_(concurrent_safe) {
  if (timeout_s_ <= 0.0)
    throw ValidationError("external evaluator timeout must be positive");
  // A child closing its stdin early must surface as EPIPE, not kill us.
  std::signal(SIGPIPE, SIG_IGN);
}

namespace {

struct Pipe {
  int fds[2] = {-1, -1};
  Pipe() {
    if (::pipe(fds) != 0)
      throw ProtocolError("pipe() failed");
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fds[0] >= 0) ::close(fds[0]);
    fds[0] = -1;
  }
  void close_write() {
    if (fds[1] >= 0) ::close(fds[1]);
    fds[1] = -1;
  }
};

void set_nonblocking(int fd) {
  int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

} // namespace

EvalOutput ExternalEvaluator::evaluate(const Configuration &config,
                                       const std::vector<std::string> &instances) {
  const auto started = std::chrono::steady_clock::now();
  ordered_json req;
  req["config"] = ordered_json::parse(configuration_to_json(config, space_));
  req["instances"] = instances;
  const std::string request = req.dump();

  Pipe to_child, from_child;
  pid_t pid = ::fork();
  if (pid < 0)
    throw ProtocolError("fork() failed");
  if (pid == 0) {
    ::dup2(to_child.fds[0], STDIN_FILENO);
    ::dup2(from_child.fds[1], STDOUT_FILENO);
    to_child.close_read();
    to_child.close_write();
    from_child.close_read();
    from_child.close_write();
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char *>(nullptr));
    _exit(127);
  }
  to_child.close_read();
  from_child.close_write();
  set_nonblocking(to_child.fds[1]);
  set_nonblocking(from_child.fds[0]);

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(timeout_s_));
  std::string response;
  std::size_t written = 0;
  bool timed_out = false;

  while (true) {
    struct pollfd fds[2];
    nfds_t nfds = 0;
    int write_slot = -1, read_slot = -1;
    if (to_child.fds[1] >= 0 && written < request.size()) {
      fds[nfds] = {to_child.fds[1], POLLOUT, 0};
      write_slot = static_cast<int>(nfds++);
    } else if (to_child.fds[1] >= 0) {
      to_child.close_write(); // request fully sent: EOF for the child
    }
    if (from_child.fds[0] >= 0) {
      fds[nfds] = {from_child.fds[0], POLLIN, 0};
      read_slot = static_cast<int>(nfds++);
    }
    if (nfds == 0) break;

    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      timed_out = true;
      break;
    }
    int rc = ::poll(fds, nfds, static_cast<int>(remaining.count()) + 1);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (rc == 0) {
      timed_out = true;
      break;
    }
    if (write_slot >= 0 && (fds[write_slot].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t n = ::write(to_child.fds[1], request.data() + written, request.size() - written);
      if (n > 0) {
        written += static_cast<std::size_t>(n);
      } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
        to_child.close_write(); // child stopped reading; keep draining stdout
      }
    }
    if (read_slot >= 0 && (fds[read_slot].revents & (POLLIN | POLLERR | POLLHUP))) {
      char buf[4096];
      ssize_t n = ::read(from_child.fds[0], buf, sizeof(buf));
      if (n > 0)
        response.append(buf, static_cast<std::size_t>(n));
      else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR))
        from_child.close_read();
    }
  }

  int status = 0;
  if (timed_out) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, &status, 0);
    throw ProtocolError("external evaluator timeout after " +
                        std::to_string(timeout_s_) + " s");
  }
  ::waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw ProtocolError("external evaluator exited with status " +
                        std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

  ordered_json resp;
  try {
    resp = ordered_json::parse(response);
  } catch (const std::exception &e) {
    throw ProtocolError(std::string("external evaluator returned malformed JSON: ") +
                        e.what());
  }
  if (!resp.is_object() || !resp.contains("results") || !resp["results"].is_array())
    throw ProtocolError("external evaluator response missing results array");

  EvalOutput out;
  for (const auto &r : resp["results"]) {
    InstanceResult ir;
    try {
      ir = instance_result_from_json(r);
    } catch (const std::exception &e) {
      throw ProtocolError(std::string("external evaluator result malformed: ") + e.what());
    }
    try {
      check_runtime_lists(ir);
    } catch (const ValidationError &e) {
      throw ProtocolError(std::string("invariant violation: ") + e.what());
    }
    out.results.push_back(std::move(ir));
  }
  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

} // namespace moco
