#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "tship/instance.hpp"
#include "tship/lp1.hpp"

namespace tship {

/// Demand path d[t - first][j] used by a rollout or a replication.
using DemandPath = std::vector<std::array<int, 2>>;

enum class Lookahead {
  Independent,  // the rollout sees its own sampled path, drawn apart from the realized one
  Realized,     // the rollout sees the realized path (anticipative)
};

struct HeuristicOptions {
  int n_regions = kDefaultRegions;
  Lp1Encoding encoding = Lp1Encoding::Segments;
  BranchAndBoundOptions milp;
  Lookahead lookahead = Lookahead::Independent;
  /// Period-k holding/penalty in the rollout taken in expectation instead of
  /// from the sampled demand.
  bool expected_first_period = false;
};

/// Cost of transshipping W at period k from `opening` and then following the
/// plan's rounded decisions (W clipped to the realized stock) along `future`,
/// which holds the demands of periods k..T. `table` is needed only for
/// expected_first_period.
double rollout_cost(const Instance& inst, const State& opening, int k, int W, const StaticPlan& plan, const DemandPath& future,
                    bool expected_first_period = false, const DemandTable* table = nullptr);

/// Argmin of rollout_cost over the feasible transshipments; ties go to the
/// smallest |W|, then the smallest W.
int choose_transshipment(const Instance& inst, const State& opening, int k, const StaticPlan& plan, const DemandPath& future,
                         bool expected_first_period = false, const DemandTable* table = nullptr);

struct ReplicationStep {
  int period = 0;
  State opening;
  Action action;
  std::array<int, 2> demand{};
  double cost = 0.0;
};

struct Replication {
  std::vector<ReplicationStep> steps;
  double total = 0.0;
};

/// One simulated run of the receding-horizon policy. The solver caches LP-1
/// plans by (period, state) and must belong to the calling thread.
Replication run_replication(const Instance& inst, const State& opening, std::uint64_t seed, Lp1Solver& solver,
                            const DemandTable& table, const HeuristicOptions& options = {});
Replication run_replication(const Instance& inst, const State& opening, std::uint64_t seed, const HeuristicOptions& options = {});

/// Running mean and variance (Welford), mergeable (Chan et al.).
class EstimateAccumulator {
 public:
  void add(double x);
  void merge(const EstimateAccumulator& other);
  [[nodiscard]] long count() const { return n_; }
  [[nodiscard]] double mean() const { return mean_; }
  [[nodiscard]] double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  /// Student-t confidence half-width of the mean; needs at least two samples.
  [[nodiscard]] double half_width(double confidence) const;

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct EstimateOptions {
  double confidence = 0.95;
  double rel_halfwidth = 1e-3;
  long min_replications = 100;
  long max_replications = 1000000;
  long batch = 10;  // replications between stopping checks
  int workers = 0;   // 0 = default_workers()
};

struct Estimate {
  double mean = 0.0;
  double half_width = 0.0;
  double stddev = 0.0;
  long n = 0;
  bool converged = false;
};

/// Draws cost_of(0), cost_of(1), ... in batches until the half-width is within
/// rel_halfwidth of |mean|. cost_of is called concurrently when workers > 1; the
/// result does not depend on the worker count.
Estimate estimate_stream(const std::function<double(long)>& cost_of, const EstimateOptions& options = {});

/// Expected cost of the heuristic from `opening`. Replication i uses seed
/// mix_seed(seed, i). When `trace` is set, every step is written as a CSV line
/// replication,period,i1,i2,W,Q1,Q2,d1,d2,cost.
Estimate estimate(const Instance& inst, const State& opening, std::uint64_t seed, const EstimateOptions& options = {},
                  const HeuristicOptions& heuristic = {}, std::ostream* trace = nullptr);

}  // namespace tship
