#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tship/instance.hpp"

namespace tship {

/// Optimal cost-to-go and argmin action for every stage and lattice state.
/// Stage horizon + 1 holds the zero boundary and no actions.
class ValueTable {
 public:
  ValueTable(int horizon, StateBounds bounds);

  [[nodiscard]] int horizon() const { return horizon_; }
  [[nodiscard]] const StateBounds& bounds() const { return bounds_; }
  [[nodiscard]] bool contains(const State& s) const { return bounds_.contains(s); }

  [[nodiscard]] double cost(int t, const State& s) const { return cost_[stage(t)][index(s)]; }
  [[nodiscard]] const Action& action(int t, const State& s) const { return action_[stage(t)][index(s)]; }

  void set(int t, const State& s, double cost, const Action& a) {
    cost_[stage(t)][index(s)] = cost;
    action_[stage(t)][index(s)] = a;
  }

  [[nodiscard]] std::size_t index(const State& s) const {
    return static_cast<std::size_t>(s.i1 - bounds_.i_min) * static_cast<std::size_t>(bounds_.width()) +
           static_cast<std::size_t>(s.i2 - bounds_.i_min);
  }
  [[nodiscard]] State state_at(std::size_t idx) const {
    const auto w = static_cast<std::size_t>(bounds_.width());
    return {static_cast<int>(idx / w) + bounds_.i_min, static_cast<int>(idx % w) + bounds_.i_min};
  }
  [[nodiscard]] std::size_t n_states() const {
    return static_cast<std::size_t>(bounds_.width()) * static_cast<std::size_t>(bounds_.width());
  }

  /// Flat CSV: stage,i1,i2,cost,W,Q1,Q2 for stages 1..T.
  void write_csv(std::ostream& out) const;

 private:
  [[nodiscard]] std::size_t stage(int t) const { return static_cast<std::size_t>(t - 1); }

  int horizon_;
  StateBounds bounds_;
  std::vector<std::vector<double>> cost_;
  std::vector<std::vector<Action>> action_;
};

struct BoundsDiagnostic {
  /// Largest probability, over the designated initial states, that the optimal
  /// trajectory produces a next state outside the lattice (and is clamped).
  double max_clamped_mass = 0.0;
  bool too_tight = false;
  std::string message;
};

struct SdpOptions {
  /// Initial states whose optimal trajectories are checked against the lattice boundary.
  std::vector<State> initial_states;
  double clamp_tolerance = 1e-4;
  int workers = 0;  // 0 = default_workers()
};

struct SdpResult {
  ValueTable table;
  BoundsDiagnostic diagnostic;
};

/// Expected holding + penalty cost of period t for post-decision positions y = (y1, y2).
double immediate_cost(const State& y, int t, const Instance& inst);
double immediate_cost(const State& y, int t, const Instance& inst, const DemandTable& demand);

/// Joint action space: min over (W, Q1, Q2) of transship + order + expected period
/// cost + expected continuation.
SdpResult solve_sdp1(const Instance& inst, const SdpOptions& options = {});

/// Decoupled action space: min over W of u(|W|) plus the order-stage value of the
/// post-transshipment state, itself a min over (Q1, Q2).
SdpResult solve_sdp2(const Instance& inst, const SdpOptions& options = {});

/// Stage-indexed state -> action map; nullopt marks a state the policy does not cover.
using Policy = std::function<std::optional<Action>(int t, const State& s)>;

Policy table_policy(const ValueTable& table);
/// Open-loop plan: period-t action regardless of state, with W clipped to the
/// feasible transshipment interval of the realized state.
Policy plan_policy(std::vector<Action> plan);

struct PolicyEvaluation {
  double expected_cost = 0.0;
  double clamped_mass = 0.0;
};

/// Exact expected total cost of `policy` from `initial` by forward induction over
/// the truncated demand lattice. Throws DomainError when the policy has no action
/// for a reachable state or returns an infeasible one.
PolicyEvaluation evaluate_policy(const Instance& inst, const Policy& policy, const State& initial);

/// Expected cost from stage t when no action is taken at t and `table` is followed afterwards.
double cost_without_action(const Instance& inst, const ValueTable& table, int t, const State& s);

}  // namespace tship
