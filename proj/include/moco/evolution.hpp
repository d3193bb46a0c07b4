#pragma once

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "moco/errors.hpp"
#include "moco/evaluation.hpp"
#include "moco/ga_params.hpp"
#include "moco/metrics.hpp"
#include "moco/persistence.hpp"
#include "moco/search_space.hpp"

namespace moco {

struct Individual {
  Genome genome;
  Configuration config;
  std::optional<ObjectiveVector> objectives;
  int rank = 0;
  double crowding = 0.0;
};

/// Deb's fast non-dominated sort over minimization vectors of any (uniform)
/// dimension. Front 0 is the non-dominated set; order within a front follows
/// input order. Throws ValidationError on mixed dimensions.
std::vector<std::vector<std::size_t>>
fast_non_dominated_sort(const std::vector<std::vector<double>> &objectives);

/// Crowding distance within one front. Per objective: boundary points get
/// +infinity, interior points accumulate the normalized neighbor gap;
/// zero-range objectives contribute nothing.
std::vector<double>
crowding_distance(const std::vector<std::vector<double>> &front_objectives);

/// Binary tournament on (rank asc, crowding desc, coin flip). Draws two
/// distinct indices; requires rank/crowding to be assigned.
std::size_t tournament_select(const std::vector<Individual> &population,
                              std::mt19937_64 &rng);

/// SBX on unit genomes. With probability 1-crossover_probability the parents
/// are copied through; otherwise every gene is blended with spread factor
/// beta(u, crossover_eta). Children are clamped to [0,1] afterwards; before
/// clamping each gene pair sums to the parent pair.
std::pair<Genome, Genome> sbx_crossover(const Genome &p1, const Genome &p2,
                                        const GAParams &params,
                                        std::mt19937_64 &rng);

/// Bounded polynomial mutation on [0,1] genes, each mutated independently
/// with params' effective mutation probability for n_vars.
Genome polynomial_mutation(const Genome &genome, std::size_t n_vars,
                           const GAParams &params, std::mt19937_64 &rng);

/// Assigns rank and crowding to every individual (fronts over the whole
/// vector). All individuals must be evaluated.
void assign_rank_and_crowding(std::vector<Individual> &population);

/// Elitist truncation to k: whole fronts in rank order, the split front by
/// descending crowding (stable, so ties keep input order). Returns
/// individuals with rank/crowding assigned. Throws when k > |combined|.
std::vector<Individual> survivor_selection(std::vector<Individual> combined,
                                           std::size_t k);

struct OptimizationResult {
  std::vector<EvaluationRecord> all_records;
  std::vector<Individual> final_population;
  ParetoFront pareto; // over all_records
  /// Cumulative-archive hypervolume percent after the initial population and
  /// after each generation, measured under one fixed set of normalization
  /// bounds induced by the full archive (so the series is non-decreasing).
  std::vector<double> per_generation_hypervolume;
  ObjectiveBounds hypervolume_bounds;
};

struct RunOptions {
  std::vector<std::string> instances;
  double penalty_runtime_s = 3600.0;
  int parallel_evals = 1;
  std::array<double, 3> reference = kDefaultReference;
  /// Called after the initial population (generation 0) and after each
  /// offspring generation, with the cumulative evaluated-record count.
  std::function<void(int generation, std::size_t records_so_far)> on_generation;
};

/// The generational loop. Appends every new evaluation to the ledger as it
/// completes; ids already present in the ledger are reused without calling
/// the evaluator (deduplication doubles as crash resume, because the
/// schedule is a pure function of (space, params, seed)). Evaluator throws
/// become failed records with penalty objectives; ledger failures abort.
OptimizationResult run_nsga2(const ConfigSpace &space, Evaluator &evaluator,
                             const GAParams &params, RunLedger &ledger,
                             const RunOptions &options);

} // namespace moco
