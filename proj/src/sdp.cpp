#include "tship/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <fmt/format.h>

#include "tship/errors.hpp"
#include "tship/loss.hpp"
#include "tship/parallel.hpp"

namespace tship {

ValueTable::ValueTable(int horizon, StateBounds bounds)
    : horizon_(horizon),
      bounds_(bounds),
      cost_(static_cast<std::size_t>(horizon + 1), std::vector<double>(n_states(), 0.0)),
      action_(static_cast<std::size_t>(horizon + 1), std::vector<Action>(n_states())) {}

void ValueTable::write_csv(std::ostream& out) const {
  out << "stage,i1,i2,cost,W,Q1,Q2\n";
  for (int t = 1; t <= horizon_; ++t) {
    for (std::size_t k = 0; k < n_states(); ++k) {
      const State s = state_at(k);
      const Action& a = action_[stage(t)][k];
      out << fmt::format("{},{},{},{:.12g},{},{},{}\n", t, s.i1, s.i2, cost_[stage(t)][k], a.W, a.Q1, a.Q2);
    }
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Expected h * overage + b * shortage of a single location over its period pmf.
double location_cost(int y, const DiscreteDist& d, const CostParams& c) {
  const LossEval e = loss_exact(static_cast<double>(y), d);
  return c.h * e.complement + c.b * e.loss;
}

/// For a in [0, n_out): out[a] = min arr[k] over k in [a + lo, a + hi] ∩ [0, arr.size()),
/// ties to the smallest k. Empty windows yield +inf and index -1.
void window_min(const double* arr, int n_arr, int n_out, int lo, int hi, double* out, int* arg,
                std::deque<int>& dq) {
  dq.clear();
  int next = 0;
  for (int a = 0; a < n_out; ++a) {
    const int left = std::max(a + lo, 0);
    const int right = std::min(a + hi, n_arr - 1);
    for (; next <= right; ++next) {
      if (next < left) continue;
      while (!dq.empty() && arr[dq.back()] > arr[next]) dq.pop_back();
      dq.push_back(next);
    }
    while (!dq.empty() && dq.front() < left) dq.pop_front();
    if (dq.empty() || left > right) {
      out[a] = kInf;
      arg[a] = -1;
    } else {
      out[a] = arr[dq.front()];
      arg[a] = dq.front();
    }
  }
}

/// Post-decision quantities of one stage.
///
/// Lattices (both locations share them):
///   states      S = [i_min, i_max]
///   post-ship   A = [a_lo, a_hi]      a = i -/+ W
///   post-order  Y = [a_lo, a_hi + q]  y = a + Q
struct Stage {
  int a_lo = 0, a_hi = 0, y_hi = 0;
  int ny = 0, na = 0;
  std::vector<double> G;       // [y1][y2]: period cost + expected continuation
  std::vector<double> M2T;     // [a2][y1]: min over Q2 of c(Q2) + G(y1, a2 + Q2)
  std::vector<int> M2argT;     // [a2][y1]: argmin Q2

  [[nodiscard]] double g(int y1, int y2) const {
    return G[static_cast<std::size_t>(y1 - a_lo) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(y2 - a_lo)];
  }
  [[nodiscard]] std::size_t m2(int y1, int a2) const {
    return static_cast<std::size_t>(a2 - a_lo) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(y1 - a_lo);
  }
};

class StageBuilder {
 public:
  StageBuilder(const Instance& inst, const DemandTable& demand, int workers)
      : inst_(inst), demand_(demand), workers_(workers) {
    const auto& b = inst.bounds;
    stage_.a_lo = std::min(b.i_min, 0);
    stage_.a_hi = b.i_max + std::max(b.i_max, 0);
    stage_.y_hi = stage_.a_hi + b.q_max;
    stage_.ny = stage_.y_hi - stage_.a_lo + 1;
    stage_.na = stage_.a_hi - stage_.a_lo + 1;
  }

  /// Builds G, M2 for stage t given the stage t+1 cost vector (nullptr at t = T).
  const Stage& build(int t, const ValueTable& table) {
    Stage& s = stage_;
    const auto& b = inst_.bounds;
    const int ny = s.ny;
    const int width = b.width();

    std::array<std::vector<double>, 2> f;
    for (int j = 0; j < 2; ++j) {
      f[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(ny));
      for (int y = s.a_lo; y <= s.y_hi; ++y)
        f[static_cast<std::size_t>(j)][static_cast<std::size_t>(y - s.a_lo)] =
            location_cost(y, demand_.at(j, t), inst_.costs);
    }

    s.G.assign(static_cast<std::size_t>(ny) * static_cast<std::size_t>(ny), 0.0);
    const bool last = t == inst_.horizon;
    std::vector<double> partial;  // [i1'][y2] = E_d2 C(i1', clamp(y2 - d2))
    if (!last) {
      const auto& d2 = demand_.at(1, t);
      partial.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(ny), 0.0);
      parallel_for(static_cast<std::size_t>(width), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
          const int i1 = static_cast<int>(r) + b.i_min;
          double* row = &partial[r * static_cast<std::size_t>(ny)];
          for (int y2 = s.a_lo; y2 <= s.y_hi; ++y2) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d2.pmf.size(); ++k) {
              const int next = b.clamp(y2 - (d2.support_min + static_cast<int>(k)));
              acc += d2.pmf[k] * table.cost(t + 1, {i1, next});
            }
            row[y2 - s.a_lo] = acc;
          }
        }
      }, workers_);
    }
    const auto& d1 = demand_.at(0, t);
    parallel_for(static_cast<std::size_t>(ny), [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        const int y1 = static_cast<int>(r) + s.a_lo;
        double* row = &s.G[r * static_cast<std::size_t>(ny)];
        for (int c = 0; c < ny; ++c) row[c] = f[0][r] + f[1][static_cast<std::size_t>(c)];
        if (last) continue;
        for (std::size_t k = 0; k < d1.pmf.size(); ++k) {
          const int next = b.clamp(y1 - (d1.support_min + static_cast<int>(k)));
          const double p = d1.pmf[k];
          const double* src = &partial[static_cast<std::size_t>(next - b.i_min) * static_cast<std::size_t>(ny)];
          for (int c = 0; c < ny; ++c) row[c] += p * src[c];
        }
      }
    }, workers_);

    // M2: cheapest order at location 2 for each (y1, a2).
    const double K = inst_.costs.K;
    const double z = inst_.costs.z;
    const int qmax = inst_.bounds.q_max;
    s.M2T.assign(static_cast<std::size_t>(s.na) * static_cast<std::size_t>(ny), kInf);
    s.M2argT.assign(s.M2T.size(), 0);
    parallel_for(static_cast<std::size_t>(ny), [&](std::size_t begin, std::size_t end) {
      std::vector<double> arr(static_cast<std::size_t>(ny));
      std::vector<double> out(static_cast<std::size_t>(s.na));
      std::vector<int> arg(static_cast<std::size_t>(s.na));
      std::deque<int> dq;
      for (std::size_t r = begin; r < end; ++r) {
        const double* row = &s.G[r * static_cast<std::size_t>(ny)];
        for (int c = 0; c < ny; ++c) arr[static_cast<std::size_t>(c)] = row[c] + z * c;
        window_min(arr.data(), ny, s.na, 1, qmax, out.data(), arg.data(), dq);
        for (int a = 0; a < s.na; ++a) {
          const std::size_t idx = static_cast<std::size_t>(a) * static_cast<std::size_t>(ny) + r;
          double best = row[a];
          int q = 0;
          if (arg[static_cast<std::size_t>(a)] >= 0) {
            const int q2 = arg[static_cast<std::size_t>(a)] - a;
            const double cand = K + z * q2 + row[arg[static_cast<std::size_t>(a)]];
            if (cand < best) {
              best = cand;
              q = q2;
            }
          }
          s.M2T[idx] = best;
          s.M2argT[idx] = q;
        }
      }
    }, workers_);
    return s;
  }

 private:
  const Instance& inst_;
  const DemandTable& demand_;
  int workers_;
  Stage stage_;
};

// Visits W in tie-break order: |W| ascending, then W ascending.
template <class Fn>
void for_each_transship(const TransshipRange& r, Fn&& fn) {
  const int reach = std::max(-r.lo, r.hi);
  fn(0);
  for (int m = 1; m <= reach; ++m) {
    if (-m >= r.lo) fn(-m);
    if (m <= r.hi) fn(m);
  }
}

BoundsDiagnostic check_bounds(const Instance& inst, const ValueTable& table, const SdpOptions& options) {
  BoundsDiagnostic d;
  const Policy policy = table_policy(table);
  for (const auto& s : options.initial_states) {
    if (!table.contains(s)) {
      d.too_tight = true;
      d.message = fmt::format("initial state ({}, {}) lies outside the state lattice", s.i1, s.i2);
      return d;
    }
    const PolicyEvaluation e = evaluate_policy(inst, policy, s);
    d.max_clamped_mass = std::max(d.max_clamped_mass, e.clamped_mass);
  }
  if (d.max_clamped_mass > options.clamp_tolerance) {
    d.too_tight = true;
    d.message = fmt::format("bounds too tight: optimal trajectories reach the lattice boundary with probability {:.3g}",
                            d.max_clamped_mass);
  }
  return d;
}

enum class Formulation { Joint, Decoupled };

SdpResult solve(const Instance& inst, const SdpOptions& options, Formulation form) {
  inst.validate();
  const DemandTable demand(inst);
  const int workers = options.workers > 0 ? options.workers : default_workers();
  ValueTable table(inst.horizon, inst.bounds);
  StageBuilder builder(inst, demand, workers);
  const auto& b = inst.bounds;
  const int qmax = b.q_max;
  const double K = inst.costs.K;
  const double z = inst.costs.z;

  std::vector<double> D;
  std::vector<int> Darg;

  for (int t = inst.horizon; t >= 1; --t) {
    const Stage& st = builder.build(t, table);
    const int ny = st.ny;

    if (form == Formulation::Decoupled) {
      // order stage: D(a1, a2) = min over (Q1, Q2) given the post-transshipment state
      D.assign(static_cast<std::size_t>(st.na) * static_cast<std::size_t>(st.na), kInf);
      Darg.assign(D.size(), 0);
      parallel_for(static_cast<std::size_t>(st.na), [&](std::size_t begin, std::size_t end) {
        std::vector<double> arr(static_cast<std::size_t>(ny));
        std::vector<double> out(static_cast<std::size_t>(st.na));
        std::vector<int> arg(static_cast<std::size_t>(st.na));
        std::deque<int> dq;
        for (std::size_t a2 = begin; a2 < end; ++a2) {
          const double* col = &st.M2T[a2 * static_cast<std::size_t>(ny)];
          for (int c = 0; c < ny; ++c) arr[static_cast<std::size_t>(c)] = col[c] + z * c;
          window_min(arr.data(), ny, st.na, 1, qmax, out.data(), arg.data(), dq);
          for (int a1 = 0; a1 < st.na; ++a1) {
            double best = col[a1];
            int q = 0;
            const int k = arg[static_cast<std::size_t>(a1)];
            if (k >= 0) {
              const double cand = K + z * (k - a1) + col[k];
              if (cand < best) {
                best = cand;
                q = k - a1;
              }
            }
            const std::size_t idx = static_cast<std::size_t>(a1) * static_cast<std::size_t>(st.na) + a2;
            D[idx] = best;
            Darg[idx] = q;
          }
        }
      }, workers);
    }

    parallel_for(table.n_states(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) {
        const State s = table.state_at(k);
        double best = kInf;
        Action act;
        for_each_transship(transship_range(s), [&](int W) {
          const double u = inst.transship_cost(W);
          const int a1 = s.i1 - W;
          const int a2 = s.i2 + W;
          if (form == Formulation::Decoupled) {
            const std::size_t idx = static_cast<std::size_t>(a1 - st.a_lo) * static_cast<std::size_t>(st.na) +
                                    static_cast<std::size_t>(a2 - st.a_lo);
            const double v = u + D[idx];
            if (v < best) {
              best = v;
              const int q1 = Darg[idx];
              act = {W, q1, st.M2argT[st.m2(a1 + q1, a2)]};
            }
            return;
          }
          const double* m2 = &st.M2T[st.m2(a1, a2)];
          for (int q1 = 0; q1 <= qmax; ++q1) {
            const double v = u + (inst.order_cost(q1) + m2[q1]);
            if (v < best) {
              best = v;
              act = {W, q1, st.M2argT[st.m2(a1 + q1, a2)]};
            }
          }
        });
        table.set(t, s, best, act);
      }
    }, workers);
  }

  SdpResult result{std::move(table), {}};
  result.diagnostic = check_bounds(inst, result.table, options);
  return result;
}

}  // namespace

double immediate_cost(const State& y, int t, const Instance& inst, const DemandTable& demand) {
  return location_cost(y.i1, demand.at(0, t), inst.costs) + location_cost(y.i2, demand.at(1, t), inst.costs);
}

double immediate_cost(const State& y, int t, const Instance& inst) {
  return immediate_cost(y, t, inst, DemandTable(inst));
}

SdpResult solve_sdp1(const Instance& inst, const SdpOptions& options) {
  return solve(inst, options, Formulation::Joint);
}

SdpResult solve_sdp2(const Instance& inst, const SdpOptions& options) {
  return solve(inst, options, Formulation::Decoupled);
}

Policy table_policy(const ValueTable& table) {
  return [&table](int t, const State& s) -> std::optional<Action> {
    if (!table.contains(s) || t < 1 || t > table.horizon()) return std::nullopt;
    return table.action(t, s);
  };
}

Policy plan_policy(std::vector<Action> plan) {
  return [plan = std::move(plan)](int t, const State& s) -> std::optional<Action> {
    if (t < 1 || t > static_cast<int>(plan.size())) return std::nullopt;
    Action a = plan[static_cast<std::size_t>(t - 1)];
    const TransshipRange r = transship_range(s);
    a.W = std::clamp(a.W, r.lo, r.hi);
    return a;
  };
}

PolicyEvaluation evaluate_policy(const Instance& inst, const Policy& policy, const State& initial) {
  inst.validate();
  const auto& b = inst.bounds;
  if (!b.contains(initial))
    throw DomainError(fmt::format("initial state ({}, {}) outside the state lattice", initial.i1, initial.i2));
  const DemandTable demand(inst);
  const auto width = static_cast<std::size_t>(b.width());
  std::vector<double> prob(width * width, 0.0);
  std::vector<double> next(prob.size(), 0.0);
  const auto index = [&](int i1, int i2) {
    return static_cast<std::size_t>(i1 - b.i_min) * width + static_cast<std::size_t>(i2 - b.i_min);
  };
  prob[index(initial.i1, initial.i2)] = 1.0;

  PolicyEvaluation ev;
  for (int t = 1; t <= inst.horizon; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    const auto& d1 = demand.at(0, t);
    const auto& d2 = demand.at(1, t);
    for (std::size_t k = 0; k < prob.size(); ++k) {
      const double p = prob[k];
      if (p == 0.0) continue;
      const State s{static_cast<int>(k / width) + b.i_min, static_cast<int>(k % width) + b.i_min};
      const auto a = policy(t, s);
      if (!a) throw DomainError(fmt::format("policy has no action for reachable state ({}, {}) at stage {}", s.i1, s.i2, t));
      const TransshipRange r = transship_range(s);
      if (a->W < r.lo || a->W > r.hi || a->Q1 < 0 || a->Q2 < 0)
        throw DomainError(fmt::format("infeasible action ({}, {}, {}) at state ({}, {})", a->W, a->Q1, a->Q2, s.i1, s.i2));
      const int y1 = s.i1 - a->W + a->Q1;
      const int y2 = s.i2 + a->W + a->Q2;
      ev.expected_cost += p * (inst.transship_cost(a->W) + inst.order_cost(a->Q1) + inst.order_cost(a->Q2) +
                               immediate_cost({y1, y2}, t, inst, demand));
      for (std::size_t u = 0; u < d1.pmf.size(); ++u) {
        const int n1 = y1 - (d1.support_min + static_cast<int>(u));
        const double p1 = p * d1.pmf[u];
        for (std::size_t w = 0; w < d2.pmf.size(); ++w) {
          const int n2 = y2 - (d2.support_min + static_cast<int>(w));
          const double q = p1 * d2.pmf[w];
          if (n1 < b.i_min || n1 > b.i_max || n2 < b.i_min || n2 > b.i_max) ev.clamped_mass += q;
          next[index(b.clamp(n1), b.clamp(n2))] += q;
        }
      }
    }
    prob.swap(next);
  }
  return ev;
}

double cost_without_action(const Instance& inst, const ValueTable& table, int t, const State& s) {
  const DemandTable demand(inst);
  double v = immediate_cost(s, t, inst, demand);
  if (t == inst.horizon) return v;
  const auto& b = inst.bounds;
  const auto& d1 = demand.at(0, t);
  const auto& d2 = demand.at(1, t);
  for (std::size_t u = 0; u < d1.pmf.size(); ++u) {
    for (std::size_t w = 0; w < d2.pmf.size(); ++w) {
      const State n{b.clamp(s.i1 - (d1.support_min + static_cast<int>(u))),
                    b.clamp(s.i2 - (d2.support_min + static_cast<int>(w)))};
      v += d1.pmf[u] * d2.pmf[w] * table.cost(t + 1, n);
    }
  }
  return v;
}

}  // namespace tship
