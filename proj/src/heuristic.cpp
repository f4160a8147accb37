#include "tship/heuristic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "tship/errors.hpp"
#include "tship/parallel.hpp"
#include "tship/sdp.hpp"
#include "tship/stats.hpp"

namespace tship {

namespace {

double end_of_period_cost(int level, const CostParams& c) { return level >= 0 ? c.h * level : -c.b * level; }

const PlanPeriod& plan_period(const StaticPlan& plan, int t) {
  const int idx = t - plan.start;
  if (!plan.ok() || idx < 0 || idx >= static_cast<int>(plan.periods.size())) {
    throw DomainError(fmt::format("plan starting at period {} has no decision for period {}", plan.start, t));
  }
  return plan.periods[static_cast<std::size_t>(idx)];
}

constexpr std::uint64_t kLookaheadStream = 0x6c6f6f6b61686561ULL;

DemandPath sample_path(const DemandTable& table, int horizon, Rng& rng) {
  DemandPath path(static_cast<std::size_t>(horizon));
  for (int t = 1; t <= horizon; ++t) {
    for (int j = 0; j < 2; ++j) path[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)] = sample(table.at(j, t), rng);
  }
  return path;
}

}  // namespace

double rollout_cost(const Instance& inst, const State& opening, int k, int W, const StaticPlan& plan, const DemandPath& future,
                    bool expected_first_period, const DemandTable* table) {
  const TransshipRange range = transship_range(opening);
  if (W < range.lo || W > range.hi) throw DomainError(fmt::format("transshipment {} outside [{}, {}]", W, range.lo, range.hi));
  if (static_cast<int>(future.size()) < inst.horizon - k + 1) throw DomainError("rollout path shorter than the remaining horizon");
  if (expected_first_period && table == nullptr) throw DomainError("expected first-period cost needs the demand table");
  double total = 0.0;
  State s = opening;
  for (int t = k; t <= inst.horizon; ++t) {
    Action a = plan_period(plan, t).rounded;
    a.Q1 = std::max(a.Q1, 0);
    a.Q2 = std::max(a.Q2, 0);
    if (t == k) {
      a.W = W;
    } else {
      const TransshipRange r = transship_range(s);
      a.W = std::clamp(a.W, r.lo, r.hi);
    }
    total += inst.transship_cost(a.W) + inst.order_cost(a.Q1) + inst.order_cost(a.Q2);
    const State y{s.i1 - a.W + a.Q1, s.i2 + a.W + a.Q2};
    const auto& d = future[static_cast<std::size_t>(t - k)];
    const State next{y.i1 - d[0], y.i2 - d[1]};
    if (t == k && expected_first_period) {
      total += immediate_cost(y, t, inst, *table);
    } else {
      total += end_of_period_cost(next.i1, inst.costs) + end_of_period_cost(next.i2, inst.costs);
    }
    s = next;
  }
  return total;
}

int choose_transshipment(const Instance& inst, const State& opening, int k, const StaticPlan& plan, const DemandPath& future,
                         bool expected_first_period, const DemandTable* table) {
  const TransshipRange range = transship_range(opening);
  int best = 0;
  double best_cost = rollout_cost(inst, opening, k, 0, plan, future, expected_first_period, table);
  // visit W in order of |W|, then sign, so strict improvement implements the tie rule
  const int reach = std::max(range.hi, -range.lo);
  for (int a = 1; a <= reach; ++a) {
    for (int W : {-a, a}) {
      if (W < range.lo || W > range.hi) continue;
      const double c = rollout_cost(inst, opening, k, W, plan, future, expected_first_period, table);
      if (c < best_cost) {
        best_cost = c;
        best = W;
      }
    }
  }
  return best;
}

Replication run_replication(const Instance& inst, const State& opening, std::uint64_t seed, Lp1Solver& solver,
                            const DemandTable& table, const HeuristicOptions& options) {
  Rng rng(seed);
  const DemandPath realized = sample_path(table, inst.horizon, rng);
  DemandPath lookahead;
  if (options.lookahead == Lookahead::Independent) {
    Rng look(mix_seed(seed, kLookaheadStream));
    lookahead = sample_path(table, inst.horizon, look);
  }
  const DemandPath& seen = options.lookahead == Lookahead::Independent ? lookahead : realized;

  Replication rep;
  State s = opening;
  for (int k = 1; k <= inst.horizon; ++k) {
    const StaticPlan& plan = solver.solve(k, s);
    if (!plan.ok()) {
      throw DomainError(fmt::format("LP-1 at period {} from state ({}, {}) ended with status {}", k, s.i1, s.i2,
                                    to_string(plan.status)));
    }
    const DemandPath future(seen.begin() + (k - 1), seen.end());
    ReplicationStep step;
    step.period = k;
    step.opening = s;
    step.action.W = choose_transshipment(inst, s, k, plan, future, options.expected_first_period, &table);
    step.action.Q1 = std::max(plan.periods.front().rounded.Q1, 0);
    step.action.Q2 = std::max(plan.periods.front().rounded.Q2, 0);
    step.demand = realized[static_cast<std::size_t>(k - 1)];
    s = {s.i1 - step.action.W + step.action.Q1 - step.demand[0], s.i2 + step.action.W + step.action.Q2 - step.demand[1]};
    step.cost = inst.transship_cost(step.action.W) + inst.order_cost(step.action.Q1) + inst.order_cost(step.action.Q2) +
                end_of_period_cost(s.i1, inst.costs) + end_of_period_cost(s.i2, inst.costs);
    rep.total += step.cost;
    rep.steps.push_back(step);
  }
  return rep;
}

Replication run_replication(const Instance& inst, const State& opening, std::uint64_t seed, const HeuristicOptions& options) {
  Lp1Solver solver(inst, options.n_regions, options.encoding, options.milp);
  return run_replication(inst, opening, seed, solver, DemandTable(inst), options);
}

void EstimateAccumulator::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void EstimateAccumulator::merge(const EstimateAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ = (na * mean_ + nb * other.mean_) / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  n_ += other.n_;
}

double EstimateAccumulator::half_width(double confidence) const {
  if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError(fmt::format("confidence {} outside (0, 1)", confidence));
  if (n_ < 2) throw DomainError("a confidence interval needs at least two replications");
  const double q = stats::student_t_quantile(0.5 + 0.5 * confidence, static_cast<double>(n_ - 1));
  return q * std::sqrt(variance() / static_cast<double>(n_));
}

Estimate estimate_stream(const std::function<double(long)>& cost_of, const EstimateOptions& options) {
  if (!(options.rel_halfwidth > 0.0)) throw ConfigError("rel_halfwidth must be positive");
  if (options.min_replications < 2 || options.batch < 1 || options.max_replications < options.min_replications) {
    throw ConfigError("need 2 <= min_replications <= max_replications and batch >= 1");
  }
  const int workers = options.workers > 0 ? options.workers : default_workers();
  EstimateAccumulator acc;
  Estimate out;
  std::vector<double> costs;
  while (true) {
    const long target = acc.count() < options.min_replications ? options.min_replications
                                                               : std::min(options.max_replications, acc.count() + options.batch);
    const long first = acc.count();
    costs.assign(static_cast<std::size_t>(target - first), 0.0);
    parallel_for(
        costs.size(),
        [&](std::size_t begin, std::size_t end) {
          for (std::size_t i = begin; i < end; ++i) costs[i] = cost_of(first + static_cast<long>(i));
        },
        workers);
    for (double c : costs) acc.add(c);
    out.mean = acc.mean();
    out.stddev = std::sqrt(acc.variance());
    out.half_width = acc.half_width(options.confidence);
    out.n = acc.count();
    out.converged = out.half_width <= options.rel_halfwidth * std::abs(out.mean);
    if (out.converged || acc.count() >= options.max_replications) return out;
  }
}

Estimate estimate(const Instance& inst, const State& opening, std::uint64_t seed, const EstimateOptions& options,
                  const HeuristicOptions& heuristic, std::ostream* trace) {
  const DemandTable table(inst);
  // one solver per concurrent caller; plans do not depend on which solver produced them
  std::mutex pool_mutex;
  std::vector<std::unique_ptr<Lp1Solver>> pool;
  auto acquire = [&] {
    std::lock_guard lock(pool_mutex);
    if (pool.empty()) return std::make_unique<Lp1Solver>(inst, heuristic.n_regions, heuristic.encoding, heuristic.milp);
    auto s = std::move(pool.back());
    pool.pop_back();
    return s;
  };
  auto release = [&](std::unique_ptr<Lp1Solver> s) {
    std::lock_guard lock(pool_mutex);
    pool.push_back(std::move(s));
  };

  std::mutex trace_mutex;
  std::map<long, std::string> pending;  // trace lines waiting for earlier replications
  long next_trace = 0;
  auto cost_of = [&](long i) {
    auto solver = acquire();
    Replication rep;
    try {
      rep = run_replication(inst, opening, mix_seed(seed, static_cast<std::uint64_t>(i)), *solver, table, heuristic);
    } catch (...) {
      release(std::move(solver));
      throw;
    }
    release(std::move(solver));
    if (trace != nullptr) {
      std::string lines;
      for (const auto& st : rep.steps) {
        lines += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", i, st.period, st.opening.i1, st.opening.i2, st.action.W,
                             st.action.Q1, st.action.Q2, st.demand[0], st.demand[1], st.cost);
      }
      std::lock_guard lock(trace_mutex);
      pending.emplace(i, std::move(lines));
      for (auto it = pending.begin(); it != pending.end() && it->first == next_trace; it = pending.erase(it), ++next_trace) {
        *trace << it->second;
      }
    }
    return rep.total;
  };
  if (trace != nullptr) *trace << "replication,period,i1,i2,W,Q1,Q2,d1,d2,cost\n";
  return estimate_stream(cost_of, options);
}

}  // namespace tship
