#include "moco/ga_params.hpp"

#include <json.hpp>

namespace moco {

using ordered_json = nlohmann::ordered_json;

double GAParams::effective_mutation_probability(std::size_t n_vars) const {
  if (mutation_probability) return *mutation_probability;
  if (n_vars == 0)
    throw ValidationError("cannot derive mutation probability for an empty space");
  return 1.0 / static_cast<double>(n_vars);
}

void GAParams::check() const {
  if (population_size < 2)
    throw ValidationError("population_size must be >= 2");
  if (generations < 1)
    throw ValidationError("generations must be >= 1");
  if (crossover_probability < 0.0 || crossover_probability > 1.0)
    throw ValidationError("crossover_probability must be in [0,1]");
  if (crossover_eta <= 0.0)
    throw ValidationError("crossover_eta must be positive");
  if (mutation_probability && (*mutation_probability < 0.0 || *mutation_probability > 1.0))
    throw ValidationError("mutation_probability must be in [0,1]");
  if (mutation_eta <= 0.0)
    throw ValidationError("mutation_eta must be positive");
}

std::string GAParams::to_json() const {
  ordered_json j;
  j["population_size"] = population_size;
  j["generations"] = generations;
  j["crossover_probability"] = crossover_probability;
  j["crossover_eta"] = crossover_eta;
  if (mutation_probability)
    j["mutation_probability"] = *mutation_probability;
  else
    j["mutation_probability"] = nullptr;
  j["mutation_eta"] = mutation_eta;
  j["seed"] = seed;
  return j.dump();
}

GAParams GAParams::from_json(const std::string &text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception &e) {
    throw ValidationError(std::string("ga_params JSON parse error: ") + e.what());
  }
  GAParams p;
  p.population_size = j.value("population_size", p.population_size);
  p.generations = j.value("generations", p.generations);
  p.crossover_probability = j.value("crossover_probability", p.crossover_probability);
  p.crossover_eta = j.value("crossover_eta", p.crossover_eta);
  if (j.contains("mutation_probability") && !j["mutation_probability"].is_null())
    p.mutation_probability = j["mutation_probability"].get<double>();
  p.mutation_eta = j.value("mutation_eta", p.mutation_eta);
  p.seed = j.value("seed", p.seed);
  p.check();
  return p;
}

} // namespace moco
