#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "moco/search_space.hpp"

using namespace moco;

namespace {

Configuration cfg(const ConfigSpace &space,
                  std::map<std::string, ParamValue> values) {
  return make_configuration(space, std::move(values));
}

// Reference-run row #5.
std::map<std::string, ParamValue> row5_values() {
  return {{"temperature", 0.692},
          {"top_p", 0.384},
          {"max_tokens", std::int64_t{2972}},
          {"step_limit", std::int64_t{38}},
          {"cost_limit", 6.73},
          {"env_timeout", std::int64_t{40}},
          {"llm_timeout", std::int64_t{56}},
          {"prompt_template", std::string("3")}};
}

} // namespace

TEST_CASE("default space matches the documented 8 parameters") {
  const ConfigSpace space = default_space();
  REQUIRE(space.n_vars() == 8);

  const ParamSpec &t = space.param(0);
  CHECK(t.name == "temperature");
  CHECK(t.kind == ParamKind::continuous);
  CHECK(t.lower == 0.0);
  CHECK(t.upper == 1.0);

  const ParamSpec *tokens = space.find("max_tokens");
  REQUIRE(tokens != nullptr);
  CHECK(tokens->kind == ParamKind::integer);
  CHECK(tokens->lower == 512);
  CHECK(tokens->upper == 4096);

  const ParamSpec *top_p = space.find("top_p");
  REQUIRE(top_p != nullptr);
  CHECK(top_p->lower == 0.1);
  CHECK(top_p->upper == 1.0);

  const ParamSpec *step = space.find("step_limit");
  REQUIRE(step != nullptr);
  CHECK(step->lower == 10);
  CHECK(step->upper == 40);

  const ParamSpec *cost = space.find("cost_limit");
  REQUIRE(cost != nullptr);
  CHECK(cost->lower == 3.0);
  CHECK(cost->upper == 10.0);

  for (const char *name : {"env_timeout", "llm_timeout"}) {
    const ParamSpec *p = space.find(name);
    REQUIRE(p != nullptr);
    CHECK(p->kind == ParamKind::integer);
    CHECK(p->lower == 40);
    CHECK(p->upper == 60);
  }

  const ParamSpec *prompt = space.find("prompt_template");
  REQUIRE(prompt != nullptr);
  CHECK(prompt->kind == ParamKind::categorical);
  CHECK(prompt->categories == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("decode maps boundary genomes to bound values") {
  const ConfigSpace space = default_space();

  const Configuration lo = decode(Genome(8, 0.0), space);
  CHECK(*lo.numeric("temperature") == 0.0);
  CHECK(*lo.numeric("top_p") == 0.1);
  CHECK(*lo.numeric("max_tokens") == 512);
  CHECK(*lo.numeric("step_limit") == 10);
  CHECK(*lo.numeric("cost_limit") == 3.0);
  CHECK(*lo.numeric("env_timeout") == 40);
  CHECK(*lo.numeric("llm_timeout") == 40);
  CHECK(std::get<std::string>(*lo.find("prompt_template")) == "1");

  const Configuration hi = decode(Genome(8, 1.0), space);
  CHECK(*hi.numeric("temperature") == 1.0);
  CHECK(*hi.numeric("top_p") == 1.0);
  CHECK(*hi.numeric("max_tokens") == 4096);
  CHECK(*hi.numeric("step_limit") == 40);
  CHECK(*hi.numeric("cost_limit") == 10.0);
  CHECK(*hi.numeric("env_timeout") == 60);
  CHECK(*hi.numeric("llm_timeout") == 60);
  CHECK(std::get<std::string>(*hi.find("prompt_template")) == "3");
}

TEST_CASE("decode formula spot checks") {
  const ConfigSpace space = default_space();
  Genome g(8, 0.0);
  g[0] = 0.692; // temperature scales linearly
  g[7] = 0.70;  // floor(0.70 * 3) = 2 -> third category
  const Configuration c = decode(g, space);
  CHECK(*c.numeric("temperature") == doctest::Approx(0.692).epsilon(1e-12));
  CHECK(std::get<std::string>(*c.find("prompt_template")) == "3");
}

TEST_CASE("integer decode rounds half-up and clamps") {
  ConfigSpace space({{"n", ParamKind::integer, 0, 10, {}, ""}});
  // 0.45 scales to 4.5, half-up -> 5.
  CHECK(*decode({0.45}, space).numeric("n") == 5);
  CHECK(*decode({1.0}, space).numeric("n") == 10);
  CHECK(*decode({0.0}, space).numeric("n") == 0);
}

TEST_CASE("decode rejects bad genomes") {
  const ConfigSpace space = default_space();
  CHECK_THROWS_AS(decode(Genome(7, 0.5), space), ValidationError);
  Genome g(8, 0.5);
  g[3] = 1.5;
  CHECK_THROWS_AS(decode(g, space), ValidationError);
  g[3] = -0.1;
  CHECK_THROWS_AS(decode(g, space), ValidationError);
}

TEST_CASE("encode/decode round-trips reference row #5") {
  const ConfigSpace space = default_space();
  const Configuration original = cfg(space, row5_values());
  const Configuration roundtrip = decode(encode(original, space), space);

  CHECK(*roundtrip.numeric("temperature") == doctest::Approx(0.692).epsilon(1e-12));
  CHECK(*roundtrip.numeric("top_p") == doctest::Approx(0.384).epsilon(1e-12));
  CHECK(*roundtrip.numeric("max_tokens") == 2972);
  CHECK(*roundtrip.numeric("step_limit") == 38);
  CHECK(*roundtrip.numeric("cost_limit") == doctest::Approx(6.73).epsilon(1e-12));
  CHECK(*roundtrip.numeric("env_timeout") == 40);
  CHECK(*roundtrip.numeric("llm_timeout") == 56);
  CHECK(std::get<std::string>(*roundtrip.find("prompt_template")) == "3");
}

TEST_CASE("encode boundary and bucket-midpoint conventions") {
  const ConfigSpace space = default_space();
  // temp 0.0 in [0,1] -> gene 0.0
  auto values = row5_values();
  values["temperature"] = 0.0;
  const Genome g = encode(cfg(space, values), space);
  CHECK(g[0] == 0.0);

  // max_tokens 512 lands at the midpoint of the first integer bucket and
  // decodes back to exactly 512.
  values["max_tokens"] = std::int64_t{512};
  const Genome g2 = encode(cfg(space, values), space);
  CHECK(*decode(g2, space).numeric("max_tokens") == 512);
  CHECK(g2[2] > 0.0);
  CHECK(g2[2] < 1.0 / (4096.0 - 512.0));
}

TEST_CASE("round-trip holds for random in-space configurations") {
  const ConfigSpace space = default_space();
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Configuration c = random_config(space, rng);
    const Configuration back = decode(encode(c, space), space);
    for (const auto &p : space.params()) {
      if (p.kind == ParamKind::continuous)
        CHECK(*back.numeric(p.name) ==
              doctest::Approx(*c.numeric(p.name)).epsilon(1e-12));
      else if (p.kind == ParamKind::integer)
        CHECK(*back.numeric(p.name) == *c.numeric(p.name));
      else
        CHECK(std::get<std::string>(*back.find(p.name)) ==
              std::get<std::string>(*c.find(p.name)));
    }
    CHECK(back.id == c.id);
  }
}

TEST_CASE("every genome decodes to a valid configuration") {
  const ConfigSpace space = default_space();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Genome g(space.n_vars());
    for (auto &x : g) x = unit(rng);
    const Configuration c = decode(g, space);
    CHECK(validate(c, space).ok);
  }
}

TEST_CASE("validate flags the out-of-space default in baseline mode") {
  const ConfigSpace space = default_space();
  const Configuration def = cfg(space, {{"temperature", 0.0},
                                        {"top_p", 1.0},
                                        {"max_tokens", std::int64_t{4096}},
                                        {"step_limit", std::int64_t{240}},
                                        {"cost_limit", 3.0},
                                        {"env_timeout", std::int64_t{60}},
                                        {"llm_timeout", std::int64_t{60}}});

  const ValidationResult strict = validate(def, space);
  CHECK_FALSE(strict.ok);

  const ValidationResult baseline = validate(def, space, true);
  CHECK(baseline.ok);
  bool saw_step = false, saw_prompt = false;
  for (const auto &v : baseline.violations) {
    if (v.param == "step_limit") {
      saw_step = true;
      CHECK(v.message.find("out of range") != std::string::npos);
    }
    if (v.param == "prompt_template") {
      saw_prompt = true;
      CHECK(v.message.find("missing") != std::string::npos);
    }
  }
  CHECK(saw_step);
  CHECK(saw_prompt);
}

TEST_CASE("validate accepts reference config #4 cleanly") {
  const ConfigSpace space = default_space();
  const Configuration c4 = cfg(space, {{"temperature", 0.085},
                                       {"top_p", 0.135},
                                       {"max_tokens", std::int64_t{1120}},
                                       {"step_limit", std::int64_t{36}},
                                       {"cost_limit", 9.26},
                                       {"env_timeout", std::int64_t{41}},
                                       {"llm_timeout", std::int64_t{57}},
                                       {"prompt_template", std::string("2")}});
  const ValidationResult res = validate(c4, space);
  CHECK(res.ok);
  CHECK(res.violations.empty());
}

TEST_CASE("validate reports a missing parameter") {
  const ConfigSpace space = default_space();
  auto values = row5_values();
  values.erase("env_timeout");
  const ValidationResult res = validate(cfg(space, values), space);
  CHECK_FALSE(res.ok);
  bool found = false;
  for (const auto &v : res.violations)
    if (v.param == "env_timeout" && v.message.find("missing") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("random_config is deterministic per seed and in bounds") {
  const ConfigSpace space = default_space();
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 50; ++i) {
    const Configuration ca = random_config(space, a);
    const Configuration cb = random_config(space, b);
    CHECK(ca.id == cb.id);
    CHECK(validate(ca, space).ok);
  }
}

TEST_CASE("random prompt_template is near-uniform over categories") {
  const ConfigSpace space = default_space();
  std::mt19937_64 rng(3);
  std::map<std::string, int> counts;
  const int n = 1000;
  for (int i = 0; i < n; ++i)
    counts[std::get<std::string>(
        *random_config(space, rng).find("prompt_template"))]++;
  for (const auto &label : {"1", "2", "3"}) {
    const double freq = counts[label] / static_cast<double>(n);
    CHECK(freq > 1.0 / 3 - 0.05);
    CHECK(freq < 1.0 / 3 + 0.05);
  }
}

TEST_CASE("configuration ids are stable and value-sensitive") {
  const ConfigSpace space = default_space();
  const Configuration a = cfg(space, row5_values());
  const Configuration b = cfg(space, row5_values());
  CHECK(a.id == b.id);

  auto tweaked = row5_values();
  tweaked["llm_timeout"] = std::int64_t{57};
  CHECK(cfg(space, tweaked).id != a.id);

  // Sub-rendering-precision continuous changes collapse to the same id.
  auto tiny = row5_values();
  tiny["temperature"] = 0.69200000001;
  CHECK(cfg(space, tiny).id == a.id);
}

TEST_CASE("space and configuration JSON round-trip") {
  const ConfigSpace space = default_space();
  const ConfigSpace back = ConfigSpace::from_json(space.to_json());
  CHECK(back.n_vars() == space.n_vars());
  CHECK(back.content_hash() == space.content_hash());

  const Configuration c = cfg(space, row5_values());
  const Configuration cback = configuration_from_json(
      configuration_to_json(c, space), space);
  CHECK(cback.id == c.id);
}

TEST_CASE("content hash distinguishes different spaces") {
  const ConfigSpace a = default_space();
  ConfigSpace b({{"temperature", ParamKind::continuous, 0.0, 2.0, {}, ""}});
  CHECK(a.content_hash() != b.content_hash());
}

TEST_CASE("make_configuration rejects unknown parameters") {
  const ConfigSpace space = default_space();
  CHECK_THROWS_AS(cfg(space, {{"bogus", 1.0}}), ValidationError);
}
