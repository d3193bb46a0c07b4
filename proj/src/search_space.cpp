#include "moco/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

namespace moco {

namespace {

using ordered_json = nlohmann::ordered_json;

// FNV-1a, 64-bit. Good enough for content addressing; collision odds over a
// few thousand ledger records are ~1e-13.
std::uint64_t fnv1a(const std::string &bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string render_continuous(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::string(buf);
}

} // namespace

std::string to_string(ParamKind kind) {
  switch (kind) {
  case ParamKind::continuous: return "continuous";
  case ParamKind::integer: return "integer";
  case ParamKind::categorical: return "categorical";
  }
  return "continuous";
}

ParamKind param_kind_from_string(const std::string &s) {
  if (s == "continuous") return ParamKind::continuous;
  if (s == "integer") return ParamKind::integer;
  if (s == "categorical") return ParamKind::categorical;
  throw ValidationError("unknown parameter kind: " + s);
}

ConfigSpace::ConfigSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
  std::set<std::string> seen;
  for (const auto &p : params_) {
    if (p.name.empty())
      throw ValidationError("parameter with empty name");
    if (!seen.insert(p.name).second)
      throw ValidationError("duplicate parameter name: " + p.name);
    if (p.kind == ParamKind::categorical) {
      if (p.categories.empty())
        throw ValidationError("categorical parameter '" + p.name + "' has no categories");
    } else {
      if (p.lower > p.upper)
        throw ValidationError("parameter '" + p.name + "': lower > upper");
      if (p.kind == ParamKind::integer &&
          (std::floor(p.lower) != p.lower || std::floor(p.upper) != p.upper))
        throw ValidationError("parameter '" + p.name + "': integer bounds must be whole numbers");
    }
  }
}

const ParamSpec *ConfigSpace::find(const std::string &name) const {
  for (const auto &p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::string ConfigSpace::content_hash() const { return hex64(fnv1a(to_json())); }

std::string ConfigSpace::to_json() const {
  ordered_json arr = ordered_json::array();
  for (const auto &p : params_) {
    ordered_json j;
    j["name"] = p.name;
    j["kind"] = to_string(p.kind);
    if (p.kind == ParamKind::categorical) {
      j["categories"] = p.categories;
    } else {
      j["lower"] = p.lower;
      j["upper"] = p.upper;
    }
    j["unit"] = p.unit;
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

ConfigSpace ConfigSpace::from_json(const std::string &text) {
  ordered_json arr;
  try {
    arr = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw ValidationError(std::string("space JSON parse error: ") + e.what());
  }
  if (!arr.is_array())
    throw ValidationError("space JSON must be an array of parameter specs");
  std::vector<ParamSpec> params;
  for (const auto &j : arr) {
    ParamSpec p;
    p.name = j.at("name").get<std::string>();
    p.kind = param_kind_from_string(j.at("kind").get<std::string>());
    if (p.kind == ParamKind::categorical) {
      for (const auto &c : j.at("categories"))
        p.categories.push_back(c.is_string() ? c.get<std::string>() : c.dump());
    } else {
      p.lower = j.at("lower").get<double>();
      p.upper = j.at("upper").get<double>();
    }
    if (j.contains("unit") && j["unit"].is_string())
      p.unit = j["unit"].get<std::string>();
    params.push_back(std::move(p));
  }
  return ConfigSpace(std::move(params));
}

std::string render_value(const ParamValue &v) {
  if (std::holds_alternative<double>(v))
    return render_continuous(std::get<double>(v));
  if (std::holds_alternative<std::int64_t>(v))
    return std::to_string(std::get<std::int64_t>(v));
  return std::get<std::string>(v);
}

const ParamValue *Configuration::find(const std::string &name) const {
  auto it = values.find(name);
  return it == values.end() ? nullptr : &it->second;
}

std::optional<double> Configuration::numeric(const std::string &name) const {
  const ParamValue *v = find(name);
  if (!v) return std::nullopt;
  if (std::holds_alternative<double>(*v)) return std::get<double>(*v);
  if (std::holds_alternative<std::int64_t>(*v))
    return static_cast<double>(std::get<std::int64_t>(*v));
  try {
    return std::stod(std::get<std::string>(*v));
  } catch (...) {
    return std::nullopt;
  }
}

Configuration make_configuration(const ConfigSpace &space,
                                 std::map<std::string, ParamValue> values) {
  for (const auto &[name, v] : values) {
    (void)v;
    if (!space.find(name))
      throw ValidationError("unknown parameter: " + name);
  }
  // Canonical rendering in space order; missing values get a fixed marker so
  // an absent field and a coincidentally-equal present one never collide.
  std::string canon;
  for (const auto &p : space.params()) {
    canon += p.name;
    canon += '=';
    auto it = values.find(p.name);
    canon += it == values.end() ? "<missing>" : render_value(it->second);
    canon += '\n';
  }
  Configuration c;
  c.values = std::move(values);
  c.id = hex64(fnv1a(canon));
  return c;
}

ConfigSpace default_space() {
  std::vector<ParamSpec> params;
  params.push_back({"temperature", ParamKind::continuous, 0.0, 1.0, {}, ""});
  params.push_back({"top_p", ParamKind::continuous, 0.1, 1.0, {}, ""});
  params.push_back({"max_tokens", ParamKind::integer, 512, 4096, {}, "tokens"});
  params.push_back({"step_limit", ParamKind::integer, 10, 40, {}, "calls"});
  params.push_back({"cost_limit", ParamKind::continuous, 3.0, 10.0, {}, "dollars"});
  params.push_back({"env_timeout", ParamKind::integer, 40, 60, {}, "seconds"});
  params.push_back({"llm_timeout", ParamKind::integer, 40, 60, {}, "seconds"});
  params.push_back({"prompt_template", ParamKind::categorical, 0, 0, {"1", "2", "3"}, ""});
  return ConfigSpace(std::move(params));
}

namespace {

// Half-up rounding keeps the integer decode deterministic at .5 boundaries.
std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

ParamValue decode_one(const ParamSpec &p, double g) {
  switch (p.kind) {
  case ParamKind::continuous:
    return p.lower + g * (p.upper - p.lower);
  case ParamKind::integer: {
    std::int64_t v = round_half_up(p.lower + g * (p.upper - p.lower));
    v = std::max<std::int64_t>(static_cast<std::int64_t>(p.lower),
                               std::min<std::int64_t>(static_cast<std::int64_t>(p.upper), v));
    return v;
  }
  case ParamKind::categorical: {
    const auto k = static_cast<std::size_t>(p.categories.size());
    auto idx = static_cast<std::size_t>(std::floor(g * static_cast<double>(k)));
    if (idx >= k) idx = k - 1;
    return p.categories[idx];
  }
  }
  throw ValidationError("unreachable param kind");
}

} // namespace

Configuration decode(const Genome &genome, const ConfigSpace &space) {
  if (genome.size() != space.n_vars())
    throw ValidationError("genome dimension " + std::to_string(genome.size()) +
                          " != space dimension " + std::to_string(space.n_vars()));
  std::map<std::string, ParamValue> values;
  for (std::size_t i = 0; i < genome.size(); ++i) {
    double g = genome[i];
    if (!(g >= 0.0 && g <= 1.0))
      throw ValidationError("gene " + std::to_string(i) + " outside [0,1]: " +
                            std::to_string(g));
    values[space.param(i).name] = decode_one(space.param(i), g);
  }
  return make_configuration(space, std::move(values));
}

Genome encode(const Configuration &config, const ConfigSpace &space) {
  Genome g(space.n_vars());
  for (std::size_t i = 0; i < space.n_vars(); ++i) {
    const ParamSpec &p = space.param(i);
    const ParamValue *v = config.find(p.name);
    if (!v)
      throw ValidationError("cannot encode: missing parameter " + p.name);
    switch (p.kind) {
    case ParamKind::continuous: {
      if (!std::holds_alternative<double>(*v))
        throw ValidationError("parameter " + p.name + " must be continuous");
      double x = std::get<double>(*v);
      if (x < p.lower || x > p.upper)
        throw ValidationError("parameter " + p.name + " out of bounds");
      g[i] = p.upper == p.lower ? 0.0 : (x - p.lower) / (p.upper - p.lower);
      break;
    }
    case ParamKind::integer: {
      if (!std::holds_alternative<std::int64_t>(*v))
        throw ValidationError("parameter " + p.name + " must be an integer");
      double x = static_cast<double>(std::get<std::int64_t>(*v));
      if (x < p.lower || x > p.upper)
        throw ValidationError("parameter " + p.name + " out of bounds");
      if (p.upper == p.lower) {
        g[i] = 0.0;
        break;
      }
      // Midpoint of the gene interval that decodes to this integer; boundary
      // buckets are half-width because of clamping at 0 and 1.
      double range = p.upper - p.lower;
      double lo = std::max(0.0, (x - p.lower - 0.5) / range);
      double hi = std::min(1.0, (x - p.lower + 0.5) / range);
      g[i] = 0.5 * (lo + hi);
      break;
    }
    case ParamKind::categorical: {
      if (!std::holds_alternative<std::string>(*v))
        throw ValidationError("parameter " + p.name + " must be a category label");
      const auto &label = std::get<std::string>(*v);
      auto it = std::find(p.categories.begin(), p.categories.end(), label);
      if (it == p.categories.end())
        throw ValidationError("parameter " + p.name + ": unknown category '" + label + "'");
      auto idx = static_cast<double>(it - p.categories.begin());
      g[i] = (idx + 0.5) / static_cast<double>(p.categories.size());
      break;
    }
    }
  }
  return g;
}

ValidationResult validate(const Configuration &config, const ConfigSpace &space,
                          bool baseline_mode) {
  ValidationResult r;
  for (const auto &p : space.params()) {
    const ParamValue *v = config.find(p.name);
    if (!v) {
      r.violations.push_back({p.name, "missing param"});
      continue;
    }
    switch (p.kind) {
    case ParamKind::continuous:
      if (!std::holds_alternative<double>(*v)) {
        r.violations.push_back({p.name, "wrong kind: expected continuous"});
      } else {
        double x = std::get<double>(*v);
        if (x < p.lower || x > p.upper)
          r.violations.push_back({p.name, "out of range"});
      }
      break;
    case ParamKind::integer:
      if (!std::holds_alternative<std::int64_t>(*v)) {
        r.violations.push_back({p.name, "wrong kind: expected integer"});
      } else {
        auto x = std::get<std::int64_t>(*v);
        if (x < static_cast<std::int64_t>(p.lower) || x > static_cast<std::int64_t>(p.upper))
          r.violations.push_back({p.name, "out of range"});
      }
      break;
    case ParamKind::categorical:
      if (!std::holds_alternative<std::string>(*v)) {
        r.violations.push_back({p.name, "wrong kind: expected category label"});
      } else if (std::find(p.categories.begin(), p.categories.end(),
                           std::get<std::string>(*v)) == p.categories.end()) {
        r.violations.push_back({p.name, "unknown category"});
      }
      break;
    }
  }
  r.ok = baseline_mode || r.violations.empty();
  return r;
}

Genome random_genome(const ConfigSpace &space, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Genome g(space.n_vars());
  for (auto &x : g) x = unit(rng);
  return g;
}

Configuration random_config(const ConfigSpace &space, std::mt19937_64 &rng) {
  return decode(random_genome(space, rng), space);
}

std::string configuration_to_json(const Configuration &config, const ConfigSpace &space) {
  ordered_json j;
  j["id"] = config.id;
  ordered_json vals = ordered_json::object();
  for (const auto &p : space.params()) {
    const ParamValue *v = config.find(p.name);
    if (!v) continue;
    if (std::holds_alternative<double>(*v))
      vals[p.name] = std::get<double>(*v);
    else if (std::holds_alternative<std::int64_t>(*v))
      vals[p.name] = std::get<std::int64_t>(*v);
    else
      vals[p.name] = std::get<std::string>(*v);
  }
  j["values"] = std::move(vals);
  return j.dump();
}

Configuration configuration_from_json(const std::string &text, const ConfigSpace &space) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw ValidationError(std::string("configuration JSON parse error: ") + e.what());
  }
  const ordered_json &vals = j.contains("values") ? j["values"] : j;
  if (!vals.is_object())
    throw ValidationError("configuration JSON must carry a values object");
  std::map<std::string, ParamValue> values;
  for (auto it = vals.begin(); it != vals.end(); ++it) {
    const ParamSpec *p = space.find(it.key());
    if (!p)
      throw ValidationError("unknown parameter: " + it.key());
    const auto &v = it.value();
    switch (p->kind) {
    case ParamKind::continuous:
      values[it.key()] = v.get<double>();
      break;
    case ParamKind::integer:
      values[it.key()] = v.get<std::int64_t>();
      break;
    case ParamKind::categorical:
      values[it.key()] = v.is_string() ? v.get<std::string>() : v.dump();
      break;
    }
  }
  return make_configuration(space, std::move(values));
}

} // namespace moco
