#include <sstream>

#include "doctest.h"
#include "tship/errors.hpp"
#include "tship/heuristic.hpp"
#include "tship/sdp.hpp"
#include "tship/stats.hpp"

using namespace tship;

namespace {

Instance make_instance(std::array<DemandSpec, 2> demand, CostParams costs) {
  Instance inst;
  inst.horizon = demand[0].horizon();
  inst.costs = costs;
  inst.demand = std::move(demand);
  inst.bounds = Instance::default_bounds(inst.demand, inst.horizon, inst.truncation_eps);
  inst.validate();
  return inst;
}

StaticPlan idle_plan(int start, int horizon) {
  StaticPlan plan;
  plan.status = SolveStatus::Optimal;
  plan.objective = 0.0;
  plan.start = start;
  plan.periods.resize(static_cast<std::size_t>(horizon - start + 1));
  return plan;
}

double hand_cost(const State& s, int W, const std::array<int, 2>& d, const CostParams& c) {
  const int l1 = s.i1 - W - d[0];
  const int l2 = s.i2 + W - d[1];
  auto hb = [&](int l) { return l >= 0 ? c.h * l : -c.b * l; };
  return (W != 0 ? c.R + c.v * std::abs(W) : 0.0) + hb(l1) + hb(l2);
}

}  // namespace

TEST_CASE("choose_transshipment examples") {
  const CostParams costs{10, 1, 0.01, 0.5, 1, 5};
  const Instance inst = make_instance({DemandSpec::deterministic({0}), DemandSpec::deterministic({0})}, costs);
  const StaticPlan plan = idle_plan(1, 1);
  const DemandPath zero{{0, 0}};
  CHECK(choose_transshipment(inst, {0, 0}, 1, plan, zero) == 0);
  CHECK(choose_transshipment(inst, {5, -3}, 1, plan, zero) == 3);
  for (int W = 0; W <= 5; ++W) {
    CHECK(rollout_cost(inst, {5, -3}, 1, W, plan, zero) == doctest::Approx(hand_cost({5, -3}, W, {0, 0}, costs)));
  }
  CHECK_THROWS_AS(rollout_cost(inst, {5, -3}, 1, 6, plan, zero), DomainError);
  CHECK_THROWS_AS(rollout_cost(inst, {5, -3}, 1, -1, plan, zero), DomainError);

  Instance dear = inst;
  dear.costs.R = 1e6;
  for (int i1 = -4; i1 <= 6; ++i1) {
    for (int i2 = -4; i2 <= 6; ++i2) CHECK(choose_transshipment(dear, {i1, i2}, 1, plan, zero) == 0);
  }
}

TEST_CASE("choose_transshipment is the tie-broken argmin of the rollout") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const CostParams costs{5, 1, std::floor(rng.uniform() * 3), std::floor(rng.uniform() * 2), 1, 1.0 + std::floor(rng.uniform() * 3)};
    const Instance inst = make_instance({DemandSpec::deterministic({0, 0}), DemandSpec::deterministic({0, 0})}, costs);
    StaticPlan plan = idle_plan(1, 2);
    plan.periods[1].rounded = {static_cast<int>(rng.uniform() * 5) - 2, static_cast<int>(rng.uniform() * 3), 0};
    const State s{static_cast<int>(rng.uniform() * 9) - 3, static_cast<int>(rng.uniform() * 9) - 3};
    const DemandPath future{{static_cast<int>(rng.uniform() * 5), static_cast<int>(rng.uniform() * 5)},
                            {static_cast<int>(rng.uniform() * 5), static_cast<int>(rng.uniform() * 5)}};
    const int chosen = choose_transshipment(inst, s, 1, plan, future);
    const TransshipRange r = transship_range(s);
    REQUIRE(chosen >= r.lo);
    REQUIRE(chosen <= r.hi);
    const double best = rollout_cost(inst, s, 1, chosen, plan, future);
    for (int W = r.lo; W <= r.hi; ++W) {
      const double c = rollout_cost(inst, s, 1, W, plan, future);
      CHECK(c >= best);
      if (c == best && W != chosen) {
        CHECK((std::abs(W) > std::abs(chosen) || (std::abs(W) == std::abs(chosen) && W > chosen)));
      }
    }
  }
}

TEST_CASE("rollout with the expected first period") {
  const CostParams costs{10, 1, 1, 0.5, 1, 4};
  const Instance inst = make_instance({DemandSpec::poisson({2.0}), DemandSpec::poisson({1.0})}, costs);
  const DemandTable table(inst);
  const StaticPlan plan = idle_plan(1, 1);
  const DemandPath future{{0, 0}};
  const double c = rollout_cost(inst, {4, 0}, 1, 1, plan, future, true, &table);
  CHECK(c == doctest::Approx(inst.transship_cost(1) + immediate_cost({3, 1}, 1, inst, table)));
  CHECK_THROWS_AS(rollout_cost(inst, {4, 0}, 1, 1, plan, future, true, nullptr), DomainError);
}

TEST_CASE("replications") {
  const CostParams costs{10, 1, 5, 1, 1, 3};
  const Instance inst = make_instance({DemandSpec::poisson({2, 3, 1, 2}), DemandSpec::poisson({1, 1, 3, 2})}, costs);
  Lp1Solver solver(inst);
  const DemandTable table(inst);
  SUBCASE("seed-determined and feasible") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const Replication a = run_replication(inst, {3, -1}, seed, solver, table);
      const Replication b = run_replication(inst, {3, -1}, seed);
      REQUIRE(a.steps.size() == 4);
      CHECK(a.total == b.total);
      State s{3, -1};
      double total = 0.0;
      for (std::size_t k = 0; k < a.steps.size(); ++k) {
        const auto& st = a.steps[k];
        CHECK(st.action == b.steps[k].action);
        CHECK(st.demand == b.steps[k].demand);
        CHECK(st.opening == s);
        const TransshipRange r = transship_range(s);
        CHECK(st.action.W >= r.lo);
        CHECK(st.action.W <= r.hi);
        if (st.action.W > 0) CHECK(s.i1 > 0);
        if (st.action.W < 0) CHECK(s.i2 > 0);
        s = {s.i1 - st.action.W + st.action.Q1 - st.demand[0], s.i2 + st.action.W + st.action.Q2 - st.demand[1]};
        total += st.cost;
      }
      CHECK(total == doctest::Approx(a.total).epsilon(1e-12));
    }
  }
  SUBCASE("anticipative lookahead is a separate mode") {
    HeuristicOptions literal;
    literal.lookahead = Lookahead::Realized;
    const Replication a = run_replication(inst, {3, -1}, 5, solver, table, literal);
    const Replication b = run_replication(inst, {3, -1}, 5, solver, table);
    // same realized demand either way
    for (std::size_t k = 0; k < a.steps.size(); ++k) CHECK(a.steps[k].demand == b.steps[k].demand);
  }
}

TEST_CASE("deterministic demand: replanning reproduces the first plan") {
  const CostParams costs{10, 1, 3, 1, 1, 4};
  const Instance inst = make_instance({DemandSpec::deterministic({3, 0, 4, 2}), DemandSpec::deterministic({1, 5, 0, 2})}, costs);
  Lp1Solver solver(inst, 1);
  const DemandTable table(inst);
  const State opening{6, 0};
  const StaticPlan& first = solver.solve(1, opening);
  REQUIRE(first.ok());
  const double open_loop = evaluate_policy(inst, plan_policy(first.actions()), opening).expected_cost;
  CHECK(open_loop == doctest::Approx(first.objective).epsilon(1e-7));
  const Replication a = run_replication(inst, opening, 1, solver, table);
  const Replication b = run_replication(inst, opening, 99, solver, table);
  CHECK(a.total == b.total);
  CHECK(a.total == doctest::Approx(open_loop).epsilon(1e-9));
  for (const auto& st : a.steps) {
    const StaticPlan& tail = solver.solve(st.period, st.opening);
    CHECK(tail.objective == doctest::Approx(first.objective - [&] {
                                double spent = 0.0;
                                for (const auto& e : a.steps) {
                                  if (e.period < st.period) spent += e.cost;
                                }
                                return spent;
                              }())
                                .epsilon(1e-7));
  }
  EstimateOptions opt;
  const Estimate e = estimate(inst, opening, 4, opt);
  CHECK(e.n == opt.min_replications);
  CHECK(e.half_width == 0.0);
  CHECK(e.converged);
}

TEST_CASE("replication mean matches the exact value of the induced policy") {
  // prohibitive R: W is always 0, so the policy depends on the state only
  const CostParams costs{8, 1, 1e6, 1, 1, 4};
  const Instance inst = make_instance({DemandSpec::poisson({1.5, 2.0, 1.0, 2.5}), DemandSpec::poisson({1.0, 2.5, 2.0, 1.0})}, costs);
  Lp1Solver solver(inst, 6);
  const DemandTable table(inst);
  const State opening{2, 1};
  const Policy induced = [&](int t, const State& s) -> std::optional<Action> {
    const StaticPlan& plan = solver.solve(t, s);
    if (!plan.ok()) return std::nullopt;
    return Action{0, std::max(0, plan.periods.front().rounded.Q1), std::max(0, plan.periods.front().rounded.Q2)};
  };
  const double exact = evaluate_policy(inst, induced, opening).expected_cost;
  EstimateAccumulator acc;
  for (long i = 0; i < 10000; ++i) {
    const Replication r = run_replication(inst, opening, mix_seed(17, static_cast<std::uint64_t>(i)), solver, table);
    for (const auto& st : r.steps) REQUIRE(st.action.W == 0);
    acc.add(r.total);
  }
  CHECK(std::abs(acc.mean() - exact) <= acc.half_width(0.99));
}

TEST_CASE("EstimateAccumulator") {
  Rng rng(1);
  std::vector<double> xs;
  for (int i = 0; i < 1000; ++i) xs.push_back(50.0 + 10.0 * rng.standard_normal());
  EstimateAccumulator all;
  for (double x : xs) all.add(x);
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  CHECK(all.mean() == doctest::Approx(mean).epsilon(1e-12));
  CHECK(all.variance() == doctest::Approx(ss / 999.0).epsilon(1e-12));
  CHECK(all.half_width(0.95) == doctest::Approx(stats::student_t_quantile(0.975, 999) * std::sqrt(ss / 999.0 / 1000.0)));

  for (std::size_t split : {1UL, 7UL, 500UL, 999UL}) {
    EstimateAccumulator a;
    EstimateAccumulator b;
    for (std::size_t i = 0; i < xs.size(); ++i) (i < split ? a : b).add(xs[i]);
    EstimateAccumulator ab = a;
    ab.merge(b);
    EstimateAccumulator ba = b;
    ba.merge(a);
    CHECK(ab.count() == 1000);
    CHECK(std::abs(ab.mean() - ba.mean()) <= 1e-9 * std::abs(ab.mean()));
    CHECK(std::abs(ab.variance() - ba.variance()) <= 1e-9 * ab.variance());
    CHECK(std::abs(ab.variance() - all.variance()) <= 1e-9 * all.variance());
  }
  EstimateAccumulator one;
  one.add(1.0);
  CHECK_THROWS_AS(one.half_width(0.95), DomainError);
  CHECK_THROWS_AS(all.half_width(1.0), DomainError);
}

TEST_CASE("stopping rule") {
  const auto stream = [](long i) {
    Rng r(mix_seed(2718, static_cast<std::uint64_t>(i)));
    return 100.0 + r.standard_normal();
  };
  const double z = stats::normal_quantile(0.975);
  const double n_closed = std::pow(z * 1.0 / (0.001 * 100.0), 2);
  EstimateOptions opt;
  opt.batch = 1;
  const Estimate e95 = estimate_stream(stream, opt);
  CHECK(e95.converged);
  CHECK(std::abs(static_cast<double>(e95.n) - n_closed) <= 0.15 * n_closed);
  CHECK(e95.half_width <= 0.001 * e95.mean);
  opt.confidence = 0.99;
  const Estimate e99 = estimate_stream(stream, opt);
  CHECK(e99.n >= e95.n);

  EstimateOptions capped;
  capped.max_replications = 150;
  capped.rel_halfwidth = 1e-6;
  const Estimate c = estimate_stream(stream, capped);
  CHECK_FALSE(c.converged);
  CHECK(c.n == 150);

  EstimateOptions serial;
  serial.workers = 1;
  EstimateOptions threaded;
  threaded.workers = 3;
  const Estimate s1 = estimate_stream(stream, serial);
  const Estimate s3 = estimate_stream(stream, threaded);
  CHECK(s1.n == s3.n);
  CHECK(s1.mean == s3.mean);
  CHECK(s1.half_width == s3.half_width);

  EstimateOptions bad;
  bad.min_replications = 1;
  CHECK_THROWS_AS(estimate_stream(stream, bad), ConfigError);
}

TEST_CASE("heuristic estimate is worker-independent, traces included") {
  const CostParams costs{10, 1, 5, 1, 1, 3};
  const Instance inst = make_instance({DemandSpec::poisson({2, 3, 1}), DemandSpec::poisson({1, 1, 3})}, costs);
  EstimateOptions opt;
  opt.rel_halfwidth = 0.05;
  std::ostringstream t1;
  std::ostringstream t2;
  opt.workers = 1;
  const Estimate a = estimate(inst, {2, 2}, 42, opt, {}, &t1);
  opt.workers = 2;
  const Estimate b = estimate(inst, {2, 2}, 42, opt, {}, &t2);
  CHECK(a.mean == b.mean);
  CHECK(a.n == b.n);
  CHECK(t1.str() == t2.str());
  CHECK(t1.str().rfind("replication,period,i1,i2,W,Q1,Q2,d1,d2,cost\n0,1,2,2,", 0) == 0);
  const std::string text = t1.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 1 + 3 * a.n);
}
