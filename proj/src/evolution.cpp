#include "moco/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace moco {

std::vector<std::vector<std::size_t>>
fast_non_dominated_sort(const std::vector<std::vector<double>> &objectives) {
  const std::size_t n = objectives.size();
  if (n == 0) return {};
  for (const auto &v : objectives)
    if (v.size() != objectives.front().size())
      throw ValidationError("non-dominated sort: dimension mismatch");

  std::vector<std::vector<std::size_t>> dominated_by(n);
  std::vector<std::size_t> domination_count(n, 0);
  std::vector<std::vector<std::size_t>> fronts;

  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates_min(objectives[p], objectives[q]))
        dominated_by[p].push_back(q);
      else if (dominates_min(objectives[q], objectives[p]))
        ++domination_count[p];
    }
    if (domination_count[p] == 0) current.push_back(p);
  }

  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : current)
      for (std::size_t q : dominated_by[p])
        if (--domination_count[q] == 0) next.push_back(q);
    std::sort(next.begin(), next.end()); // keep input order within the front
    fronts.push_back(std::move(current));
    current = std::move(next);
  }
  return fronts;
}

std::vector<double>
crowding_distance(const std::vector<std::vector<double>> &front_objectives) {
  const std::size_t n = front_objectives.size();
  if (n == 0)
    throw ValidationError("crowding distance: empty front");
  const std::size_t dims = front_objectives.front().size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, 0.0);

  std::vector<std::size_t> order(n);
  for (std::size_t m = 0; m < dims; ++m) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return front_objectives[a][m] < front_objectives[b][m];
    });
    const double range =
        front_objectives[order.back()][m] - front_objectives[order.front()][m];
    if (range <= 0.0) continue; // constant objective carries no information
    dist[order.front()] = inf;
    dist[order.back()] = inf;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (dist[order[i]] == inf) continue;
      dist[order[i]] += (front_objectives[order[i + 1]][m] -
                         front_objectives[order[i - 1]][m]) /
                        range;
    }
  }
  if (n <= 2)
    for (auto &d : dist) d = inf; // one or two points: all boundary
  return dist;
}

std::size_t tournament_select(const std::vector<Individual> &population,
                              std::mt19937_64 &rng) {
  const std::size_t n = population.size();
  if (n < 2)
    throw ValidationError("tournament needs a population of at least 2");
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  std::size_t a = first(rng);
  std::size_t b = second(rng);
  if (b >= a) ++b;

  const Individual &ia = population[a];
  const Individual &ib = population[b];
  if (ia.rank != ib.rank) return ia.rank < ib.rank ? a : b;
  if (ia.crowding != ib.crowding) return ia.crowding > ib.crowding ? a : b;
  std::uniform_int_distribution<int> coin(0, 1);
  return coin(rng) == 0 ? a : b;
}

std::pair<Genome, Genome> sbx_crossover(const Genome &p1, const Genome &p2,
                                        const GAParams &params,
                                        std::mt19937_64 &rng) {
  if (p1.size() != p2.size())
    throw ValidationError("crossover: genome length mismatch");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) >= params.crossover_probability)
    return {p1, p2};

  const double exponent = 1.0 / (params.crossover_eta + 1.0);
  Genome c1(p1.size()), c2(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const double u = unit(rng);
    const double beta = u < 0.5 ? std::pow(2.0 * u, exponent)
                                : std::pow(1.0 / (2.0 * (1.0 - u)), exponent);
    const double a = 0.5 * ((1.0 + beta) * p1[i] + (1.0 - beta) * p2[i]);
    const double b = 0.5 * ((1.0 - beta) * p1[i] + (1.0 + beta) * p2[i]);
    c1[i] = std::clamp(a, 0.0, 1.0);
    c2[i] = std::clamp(b, 0.0, 1.0);
  }
  return {std::move(c1), std::move(c2)};
}

Genome polynomial_mutation(const Genome &genome, std::size_t n_vars,
                           const GAParams &params, std::mt19937_64 &rng) {
  const double pm = params.effective_mutation_probability(n_vars);
  const double mut_pow = 1.0 / (params.mutation_eta + 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Genome out = genome;
  for (double &g : out) {
    if (unit(rng) >= pm) continue;
    const double u = unit(rng);
    double deltaq;
    if (u < 0.5) {
      const double val =
          2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - g, params.mutation_eta + 1.0);
      deltaq = std::pow(val, mut_pow) - 1.0;
    } else {
      const double val =
          2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(g, params.mutation_eta + 1.0);
      deltaq = 1.0 - std::pow(val, mut_pow);
    }
    g = std::clamp(g + deltaq, 0.0, 1.0);
  }
  return out;
}

namespace {

std::vector<double> min_vector(const ObjectiveVector &v) {
  const auto m = v.to_minimization();
  return {m[0], m[1], m[2]};
}

} // namespace

void assign_rank_and_crowding(std::vector<Individual> &population) {
  std::vector<std::vector<double>> objs;
  objs.reserve(population.size());
  for (const auto &ind : population) {
    if (!ind.objectives)
      throw ValidationError("rank assignment requires evaluated individuals");
    objs.push_back(min_vector(*ind.objectives));
  }
  const auto fronts = fast_non_dominated_sort(objs);
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    std::vector<std::vector<double>> front_objs;
    front_objs.reserve(fronts[r].size());
    for (std::size_t idx : fronts[r]) front_objs.push_back(objs[idx]);
    const auto dist = crowding_distance(front_objs);
    for (std::size_t k = 0; k < fronts[r].size(); ++k) {
      population[fronts[r][k]].rank = static_cast<int>(r);
      population[fronts[r][k]].crowding = dist[k];
    }
  }
}

std::vector<Individual> survivor_selection(std::vector<Individual> combined,
                                           std::size_t k) {
  if (k > combined.size())
    throw ValidationError("survivor selection: k exceeds the candidate count");
  assign_rank_and_crowding(combined);

  std::vector<std::size_t> order(combined.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (combined[a].rank != combined[b].rank)
      return combined[a].rank < combined[b].rank;
    return combined[a].crowding > combined[b].crowding;
  });

  std::vector<Individual> survivors;
  survivors.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    survivors.push_back(std::move(combined[order[i]]));
  return survivors;
}

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t generation,
                           std::uint32_t phase) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), generation, phase};
  return std::mt19937_64(seq);
}

struct EvalContext {
  Evaluator &evaluator;
  RunLedger &ledger;
  const RunOptions &options;
  // id -> objectives of everything evaluated or reloaded so far
  std::unordered_map<std::string, ObjectiveVector> cache;

  explicit EvalContext(Evaluator &e, RunLedger &l, const RunOptions &o)
      : evaluator(e), ledger(l), options(o) {
    for (const auto &rec : ledger.records())
      cache.emplace(rec.config.id, rec.objectives);
  }

  EvaluationRecord run_one(const Configuration &config, int generation) {
    EvaluationRecord rec;
    rec.config = config;
    rec.generation = generation;
    rec.evaluator = evaluator.label();
    try {
      EvalOutput out = evaluator.evaluate(config, options.instances);
      rec.per_instance = std::move(out.results);
      rec.objectives =
          out.aggregate_override ? *out.aggregate_override : aggregate(rec.per_instance);
      rec.wall_time_s = out.wall_time_s;
      rec.label = out.trace_label;
      rec.status = EvalStatus::ok;
    } catch (const std::exception &) {
      rec.per_instance.clear();
      rec.objectives = ObjectiveVector{0.0, 0.0, options.penalty_runtime_s};
      rec.wall_time_s = 0.0;
      rec.status = EvalStatus::failed;
    }
    return rec;
  }

  /// Fills objectives for every individual; evaluates ids not seen before
  /// (possibly concurrently) and appends new records in offspring order.
  void evaluate_population(std::vector<Individual> &pop, int generation) {
    // Distinct ids needing evaluator calls, in first-appearance order.
    std::vector<std::size_t> pending; // index of the first individual with that id
    std::vector<std::string> pending_ids;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const std::string &id = pop[i].config.id;
      if (cache.count(id)) continue;
      if (std::find(pending_ids.begin(), pending_ids.end(), id) != pending_ids.end())
        continue;
      pending.push_back(i);
      pending_ids.push_back(id);
    }

    std::vector<EvaluationRecord> fresh(pending.size());
    const bool parallel = options.parallel_evals > 1 && evaluator.concurrent_safe();
    if (parallel) {
      const std::size_t width = static_cast<std::size_t>(options.parallel_evals);
      for (std::size_t base = 0; base < pending.size(); base += width) {
        const std::size_t end = std::min(base + width, pending.size());
        std::vector<std::future<EvaluationRecord>> batch;
        for (std::size_t i = base; i < end; ++i)
          batch.push_back(std::async(std::launch::async, [&, i] {
            return run_one(pop[pending[i]].config, generation);
          }));
        for (std::size_t i = base; i < end; ++i)
          fresh[i] = batch[i - base].get();
      }
    } else {
      for (std::size_t i = 0; i < pending.size(); ++i)
        fresh[i] = run_one(pop[pending[i]].config, generation);
    }

    // Merge in offspring order: append order is deterministic regardless of
    // completion order. Ids already in the ledger were produced by the same
    // schedule in an earlier (interrupted) run, so skipping the append
    // reproduces the file exactly.
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      if (!ledger.contains(fresh[i].config.id))
        ledger.append(fresh[i]);
      cache.emplace(fresh[i].config.id, fresh[i].objectives);
    }
    for (auto &ind : pop)
      ind.objectives = cache.at(ind.config.id);
  }
};

} // namespace

OptimizationResult run_nsga2(const ConfigSpace &space, Evaluator &evaluator,
                             const GAParams &params, RunLedger &ledger,
                             const RunOptions &options) {
  params.check();
  if (options.instances.empty())
    throw ValidationError("instance list is empty");
  // Preexisting ledger content must belong to the same deterministic schedule.
  if (ledger.header().space_hash != space.content_hash())
    throw LedgerError("ledger space does not match the requested space");
  if (ledger.header().ga_params.to_json() != params.to_json())
    throw LedgerError("ledger ga_params do not match the requested run");

  const std::size_t pop_size = static_cast<std::size_t>(params.population_size);
  EvalContext ctx(evaluator, ledger, options);
  std::vector<std::size_t> archive_boundaries;

  // Generation 0: uniform initial population.
  auto init_rng = stream_rng(params.seed, 0, 0);
  std::vector<Individual> pop;
  pop.reserve(pop_size);
  for (std::size_t i = 0; i < pop_size; ++i) {
    Individual ind;
    ind.genome = random_genome(space, init_rng);
    ind.config = decode(ind.genome, space);
    pop.push_back(std::move(ind));
  }
  ctx.evaluate_population(pop, 0);
  assign_rank_and_crowding(pop);
  archive_boundaries.push_back(ledger.records().size());
  if (options.on_generation) options.on_generation(0, ledger.records().size());

  for (int g = 1; g <= params.generations; ++g) {
    auto sel_rng = stream_rng(params.seed, static_cast<std::uint32_t>(g), 1);
    auto var_rng = stream_rng(params.seed, static_cast<std::uint32_t>(g), 2);

    std::vector<Individual> offspring;
    offspring.reserve(pop_size);
    while (offspring.size() < pop_size) {
      const std::size_t a = tournament_select(pop, sel_rng);
      const std::size_t b = tournament_select(pop, sel_rng);
      auto [g1, g2] = sbx_crossover(pop[a].genome, pop[b].genome, params, var_rng);
      g1 = polynomial_mutation(g1, space.n_vars(), params, var_rng);
      g2 = polynomial_mutation(g2, space.n_vars(), params, var_rng);
      Individual c1;
      c1.genome = std::move(g1);
      c1.config = decode(c1.genome, space);
      offspring.push_back(std::move(c1));
      if (offspring.size() < pop_size) { // odd population: drop the last twin
        Individual c2;
        c2.genome = std::move(g2);
        c2.config = decode(c2.genome, space);
        offspring.push_back(std::move(c2));
      }
    }
    ctx.evaluate_population(offspring, g);

    std::vector<Individual> combined = std::move(pop);
    for (auto &ind : offspring) combined.push_back(std::move(ind));
    pop = survivor_selection(std::move(combined), pop_size);

    archive_boundaries.push_back(ledger.records().size());
    if (options.on_generation) options.on_generation(g, ledger.records().size());
  }

  OptimizationResult result;
  result.all_records = ledger.records();
  result.final_population = std::move(pop);
  result.pareto = pareto_front(result.all_records);

  // Retrospective cumulative hypervolume under one fixed bound set: induced
  // by the whole archive, so growth can only add volume.
  std::vector<ObjectiveVector> all_objs;
  all_objs.reserve(result.all_records.size());
  for (const auto &rec : result.all_records) all_objs.push_back(rec.objectives);
  result.hypervolume_bounds = induce_bounds(all_objs);
  for (std::size_t boundary : archive_boundaries) {
    std::vector<ObjectiveVector> prefix(all_objs.begin(),
                                        all_objs.begin() + static_cast<long>(boundary));
    result.per_generation_hypervolume.push_back(
        hypervolume_report(prefix, result.hypervolume_bounds, options.reference).percent);
  }
  return result;
}

} // namespace moco
