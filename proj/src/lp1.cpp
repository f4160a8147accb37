#include "tship/lp1.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "tship/errors.hpp"

namespace tship {

Lp1Partitions make_lp1_partitions(const Instance& inst, int start, int n_regions) {
  if (start < 1 || start > inst.horizon) throw ConfigError(fmt::format("start period {} outside 1..{}", start, inst.horizon));
  Lp1Partitions out;
  out.start = start;
  std::array<DiscreteDist, 2> cum{DiscreteDist::point_mass(0), DiscreteDist::point_mass(0)};
  std::array<double, 2> mu{0.0, 0.0};
  std::array<double, 2> var{0.0, 0.0};
  for (int t = start; t <= inst.horizon; ++t) {
    std::array<CumulativeDemand, 2> entry;
    for (int j = 0; j < 2; ++j) {
      const DemandSpec& spec = inst.demand[static_cast<std::size_t>(j)];
      const DiscreteDist step = discretize(spec, t, inst.truncation_eps);
      auto& c = cum[static_cast<std::size_t>(j)];
      c = convolve(c, step);
      auto& e = entry[static_cast<std::size_t>(j)];
      e.max = c.support_max();
      if (spec.family == DemandFamily::Normal) {
        mu[static_cast<std::size_t>(j)] += spec.mean(t);
        var[static_cast<std::size_t>(j)] += spec.stddev(t) * spec.stddev(t);
        const NormalDist nd{mu[static_cast<std::size_t>(j)], std::sqrt(var[static_cast<std::size_t>(j)])};
        e.partition = build_partition(nd, n_regions);
        e.mean = nd.mu;
      } else {
        const auto atoms = std::count_if(c.pmf.begin(), c.pmf.end(), [](double p) { return p > 0.0; });
        e.partition = build_partition(c, std::min<int>(n_regions, static_cast<int>(atoms)));
        e.mean = c.mean();
      }
    }
    out.periods.push_back(std::move(entry));
  }
  return out;
}

namespace {

struct Builder {
  const Instance& inst;
  const State& opening;
  const Lp1Partitions& parts;
  StaticModel sm;
  int L = 0;
  double m_q = 0.0;
  double neg_cap = 0.0;

  std::string nm(const char* base, int j, int k) const { return fmt::format("{}{}_{}", base, j + 1, parts.start + k); }
  std::string nm(const char* base, int k) const { return fmt::format("{}_{}", base, parts.start + k); }

  double cum_mean(int j, int k) const {
    return parts.periods[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)].mean;
  }
  double stock_cap(int k) const {
    return std::max(0, opening.i1) + std::max(0, opening.i2) + 2.0 * k * m_q;
  }
  // +1: transshipping out of location 1 lowers its stock
  static double w_sign(int j) { return j == 0 ? 1.0 : -1.0; }

  void common_setup() {
    L = inst.horizon - parts.start + 1;
    if (static_cast<int>(parts.periods.size()) != L) throw ConfigError("partitions do not cover the planning horizon");
    double demand_span = 0.0;
    for (int j = 0; j < 2; ++j) demand_span += parts.periods.back()[static_cast<std::size_t>(j)].max;
    const double backlog = std::max(0, -opening.i1) + std::max(0, -opening.i2);
    sm.big_m = demand_span + backlog;
    m_q = std::min<double>(inst.bounds.q_max, sm.big_m);
    neg_cap = backlog + cum_mean(0, L - 1) + cum_mean(1, L - 1);
    sm.start = parts.start;
    sm.horizon = inst.horizon;
    sm.opening = opening;
  }

  void transship_vars(int k) {
    auto& m = sm.model;
    const CostParams& c = inst.costs;
    const double cap1 = k == 0 ? std::max(0, opening.i1) : stock_cap(k);
    const double cap2 = k == 0 ? std::max(0, opening.i2) : stock_cap(k);
    const int wp = m.add_variable(nm("Wp", k), 0.0, cap1, c.v);
    const int wm = m.add_variable(nm("Wm", k), 0.0, cap2, c.v);
    const int dp = m.add_binary(nm("dp", k), c.R);
    const int dm = m.add_binary(nm("dm", k), c.R);
    m.add_constraint(nm("wp_ind", k), {{wp, 1.0}, {dp, -cap1}}, RowSense::LessEqual, 0.0);
    m.add_constraint(nm("wm_ind", k), {{wm, 1.0}, {dm, -cap2}}, RowSense::LessEqual, 0.0);
    m.add_constraint(nm("one_dir", k), {{dp, 1.0}, {dm, 1.0}}, RowSense::LessEqual, 1.0);
    sm.w_plus.push_back(wp);
    sm.w_minus.push_back(wm);
    sm.d_plus.push_back(dp);
    sm.d_minus.push_back(dm);
  }

  int order_var(int j, int k) {
    auto& m = sm.model;
    const int q = m.add_variable(nm("Q", j, k), 0.0, m_q, inst.costs.z);
    const int g = m.add_binary(nm("g", j, k), inst.costs.K);
    m.add_constraint(nm("q_ind", j, k), {{q, 1.0}, {g, -m_q}}, RowSense::LessEqual, 0.0);
    (j == 0 ? sm.q1 : sm.q2).push_back(q);
    return q;
  }

  // W+ <= max(0, I1_{k-1}) and W- <= max(0, I2_{k-1}) for k > start, where the
  // previous expected level is `level_terms` + level_const.
  void stock_limits(int k, const std::array<std::vector<Term>, 2>& level_terms, const std::array<double, 2>& level_const) {
    if (k == 0) return;
    auto& m = sm.model;
    const double big = stock_cap(k) + neg_cap;
    const int dp = sm.d_plus[static_cast<std::size_t>(k)];
    const int dm = sm.d_minus[static_cast<std::size_t>(k)];
    for (int j = 0; j < 2; ++j) {
      std::vector<Term> terms{{j == 0 ? sm.w_plus[static_cast<std::size_t>(k)] : sm.w_minus[static_cast<std::size_t>(k)], 1.0},
                              {j == 0 ? dp : dm, big}};
      for (const auto& t : level_terms[static_cast<std::size_t>(j)]) terms.push_back({t.var, -t.coef});
      m.add_constraint(nm(j == 0 ? "wp_stock" : "wm_stock", k), std::move(terms), RowSense::LessEqual,
                       big + level_const[static_cast<std::size_t>(j)]);
    }
  }

  void build_minorants() {
    auto& m = sm.model;
    const CostParams& c = inst.costs;
    std::array<std::vector<int>, 2> inv;
    for (int k = 0; k < L; ++k) {
      transship_vars(k);
      std::array<std::vector<Term>, 2> prev_level;
      std::array<double, 2> prev_const{0.0, 0.0};
      if (k > 0) {
        for (int j = 0; j < 2; ++j) prev_level[static_cast<std::size_t>(j)] = {{inv[static_cast<std::size_t>(j)].back(), 1.0}};
      }
      stock_limits(k, prev_level, prev_const);
      for (int j = 0; j < 2; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const auto& cd = parts.periods[static_cast<std::size_t>(k)][uj];
        const double open_j = j == 0 ? opening.i1 : opening.i2;
        const double s = w_sign(j);
        const int q = order_var(j, k);
        const int I = m.add_variable(nm("I", j, k), -kInf, kInf, 0.0);
        const int X = m.add_variable(nm("X", j, k), -kInf, kInf, 0.0);
        const int H = m.add_variable(nm("H", j, k), 0.0, kInf, c.h);
        const int B = m.add_variable(nm("B", j, k), 0.0, kInf, c.b);
        const double period_mean = cd.mean - (k > 0 ? cum_mean(j, k - 1) : 0.0);
        const int wp = sm.w_plus[static_cast<std::size_t>(k)];
        const int wm = sm.w_minus[static_cast<std::size_t>(k)];
        std::vector<Term> bal{{I, 1.0}, {wp, s}, {wm, -s}, {q, -1.0}};
        double rhs = -period_mean;
        if (k == 0) {
          rhs += open_j;
        } else {
          bal.push_back({inv[uj].back(), -1.0});
        }
        m.add_constraint(nm("balance", j, k), std::move(bal), RowSense::Equal, rhs);
        std::vector<Term> xdef{{X, 1.0}};
        for (int l = 0; l <= k; ++l) {
          xdef.push_back({(j == 0 ? sm.q1 : sm.q2)[static_cast<std::size_t>(l)], -1.0});
          xdef.push_back({sm.w_plus[static_cast<std::size_t>(l)], s});
          xdef.push_back({sm.w_minus[static_cast<std::size_t>(l)], -s});
        }
        m.add_constraint(nm("position", j, k), std::move(xdef), RowSense::Equal, open_j);
        const PiecewiseBounds pb = piecewise_lower_bounds(cd.partition, cd.mean);
        for (std::size_t i = 1; i < pb.complement.size(); ++i) {
          m.add_constraint(fmt::format("over{}_{}_{}", j + 1, parts.start + k, i),
                           {{H, 1.0}, {X, -pb.complement[i].slope}}, RowSense::GreaterEqual, pb.complement[i].intercept);
        }
        for (std::size_t i = 0; i < pb.loss.size(); ++i) {
          m.add_constraint(fmt::format("short{}_{}_{}", j + 1, parts.start + k, i),
                           {{B, 1.0}, {X, -pb.loss[i].slope}}, RowSense::GreaterEqual, pb.loss[i].intercept);
        }
        inv[uj].push_back(I);
        (j == 0 ? sm.x1 : sm.x2).push_back(X);
        (j == 0 ? sm.h1 : sm.h2).push_back(H);
        (j == 0 ? sm.b1 : sm.b2).push_back(B);
      }
    }
  }

  void build_segments() {
    auto& m = sm.model;
    const CostParams& c = inst.costs;
    const double hb = c.h + c.b;
    for (int k = 0; k < L; ++k) {
      transship_vars(k);
      std::array<std::vector<Term>, 2> prev_level;
      std::array<double, 2> prev_const{0.0, 0.0};
      if (k > 0) {
        prev_level = {std::vector<Term>{{sm.x1.back(), 1.0}}, std::vector<Term>{{sm.x2.back(), 1.0}}};
        prev_const = {-cum_mean(0, k - 1), -cum_mean(1, k - 1)};
      }
      stock_limits(k, prev_level, prev_const);
      for (int j = 0; j < 2; ++j) {
        const auto& cd = parts.periods[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        const double s = w_sign(j);
        const int q = order_var(j, k);
        // h H + b B = (h + b) H - b X + b mean, with H the convex piecewise function of X
        const int X = m.add_variable(nm("X", j, k), -kInf, kInf, -c.b);
        m.add_objective_constant(c.b * cd.mean);
        const int wp = sm.w_plus[static_cast<std::size_t>(k)];
        const int wm = sm.w_minus[static_cast<std::size_t>(k)];
        std::vector<Term> xdef{{X, 1.0}, {q, -1.0}, {wp, s}, {wm, -s}};
        double rhs = 0.0;
        if (k == 0) {
          rhs = j == 0 ? opening.i1 : opening.i2;
        } else {
          xdef.push_back({(j == 0 ? sm.x1 : sm.x2).back(), -1.0});
        }
        m.add_constraint(nm("position", j, k), std::move(xdef), RowSense::Equal, rhs);
        const auto& p = cd.partition;
        const std::size_t n = p.n_regions();
        std::vector<Term> seg{{X, 1.0}};
        seg.push_back({m.add_variable(fmt::format("s{}_{}_0", j + 1, parts.start + k), 0.0, kInf, 0.0), 1.0});
        double cum = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
          cum += p.region_probs[i - 1];
          const double width = i < n ? p.cond_means[i] - p.cond_means[i - 1] : kInf;
          const double slope = i < n ? cum : 1.0;
          seg.push_back({m.add_variable(fmt::format("s{}_{}_{}", j + 1, parts.start + k, i), 0.0, width, hb * slope), -1.0});
        }
        m.add_constraint(nm("segments", j, k), std::move(seg), RowSense::Equal, p.cond_means[0]);
        (j == 0 ? sm.x1 : sm.x2).push_back(X);
        (j == 0 ? sm.h1 : sm.h2).push_back(-1);
        (j == 0 ? sm.b1 : sm.b2).push_back(-1);
      }
    }
  }
};

}  // namespace

StaticModel build_lp1(const Instance& inst, const State& opening, const Lp1Partitions& partitions, Lp1Encoding encoding) {
  Builder b{inst, opening, partitions, {}, 0, 0.0, 0.0};
  b.sm.encoding = encoding;
  b.common_setup();
  if (encoding == Lp1Encoding::Minorants) {
    b.build_minorants();
  } else {
    b.build_segments();
  }
  return std::move(b.sm);
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

std::vector<Action> StaticPlan::actions() const {
  std::vector<Action> out(static_cast<std::size_t>(start - 1));
  for (const auto& p : periods) out.push_back(p.rounded);
  return out;
}

StaticPlan solve_static(const StaticModel& sm, const Instance& inst, const Lp1Partitions& partitions,
                        const MilpBackend& backend) {
  StaticPlan plan;
  plan.start = sm.start;
  const MilpSolution sol = backend.solve(sm.model);
  plan.status = sol.status;
  plan.nodes = sol.nodes;
  if (sol.status != SolveStatus::Optimal) return plan;
  plan.objective = sol.objective;
  const auto& x = sol.x;
  auto val = [&](int idx) { return x[static_cast<std::size_t>(idx)]; };
  const int L = inst.horizon - sm.start + 1;
  for (int k = 0; k < L; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    PlanPeriod p;
    p.W = val(sm.w_plus[uk]) - val(sm.w_minus[uk]);
    p.Q1 = val(sm.q1[uk]);
    p.Q2 = val(sm.q2[uk]);
    p.rounded = {round_half_up(p.W), round_half_up(p.Q1), round_half_up(p.Q2)};
    for (int j = 0; j < 2; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const auto& cd = partitions.periods[uk][uj];
      const double X = val((j == 0 ? sm.x1 : sm.x2)[uk]);
      p.inventory[uj] = X - cd.mean;
      const int h = (j == 0 ? sm.h1 : sm.h2)[uk];
      const int b = (j == 0 ? sm.b1 : sm.b2)[uk];
      if (h >= 0) {
        p.overage[uj] = val(h);
        p.shortage[uj] = val(b);
      } else {
        const PiecewiseBounds pb = piecewise_lower_bounds(cd.partition, cd.mean);
        p.overage[uj] = pb.complement_bound(X);
        p.shortage[uj] = pb.loss_bound(X);
      }
    }
    plan.periods.push_back(p);
  }
  return plan;
}

StaticPlan solve_static(const StaticModel& model, const Instance& inst, const Lp1Partitions& partitions) {
  return solve_static(model, inst, partitions, BuiltinBackend{});
}

Lp1Solver::Lp1Solver(const Instance& inst, int n_regions, Lp1Encoding encoding, BranchAndBoundOptions options)
    : inst_(inst), n_regions_(n_regions), encoding_(encoding), backend_(options) {}

const StaticPlan& Lp1Solver::solve(int start, const State& opening) {
  const auto key = std::make_tuple(start, opening.i1, opening.i2);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  auto pit = partitions_.find(start);
  if (pit == partitions_.end()) pit = partitions_.emplace(start, make_lp1_partitions(inst_, start, n_regions_)).first;
  const StaticModel model = build_lp1(inst_, opening, pit->second, encoding_);
  return cache_.emplace(key, solve_static(model, inst_, pit->second, backend_)).first->second;
}

}  // namespace tship
