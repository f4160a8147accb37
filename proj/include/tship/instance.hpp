#pragma once

#include <array>
#include <compare>
#include <string>
#include <vector>

#include "tship/demand.hpp"

namespace tship {

/// Cost parameters. Ordering costs K + zQ for Q > 0, transshipping R + vW for
/// |W| > 0, holding h and back-order penalty b per unit and period.
struct CostParams {
  double K = 0.0;
  double z = 0.0;
  double R = 0.0;
  double v = 0.0;
  double h = 1.0;
  double b = 1.0;
};

/// Inventory levels of the two locations at a review epoch (negative = back-orders).
struct State {
  int i1 = 0;
  int i2 = 0;
  auto operator<=>(const State&) const = default;
};

/// Joint decision: transship W units (positive = from location 1 to 2), then
/// order Q1 and Q2.
struct Action {
  int W = 0;
  int Q1 = 0;
  int Q2 = 0;
  auto operator<=>(const Action&) const = default;
};

/// Feasible transshipment interval [min(0, -i2), max(0, i1)]: only stock on hand moves.
struct TransshipRange {
  int lo = 0;
  int hi = 0;
};

inline TransshipRange transship_range(const State& s) { return {s.i2 > 0 ? -s.i2 : 0, s.i1 > 0 ? s.i1 : 0}; }

/// Finite lattice used by the dynamic programs; shared by both locations.
struct StateBounds {
  int i_min = 0;
  int i_max = 0;
  int q_max = 0;

  [[nodiscard]] bool contains(const State& s) const {
    return s.i1 >= i_min && s.i1 <= i_max && s.i2 >= i_min && s.i2 <= i_max;
  }
  [[nodiscard]] int clamp(int i) const { return i < i_min ? i_min : (i > i_max ? i_max : i); }
  [[nodiscard]] int width() const { return i_max - i_min + 1; }
};

struct Instance {
  int horizon = 0;
  CostParams costs;
  std::array<DemandSpec, 2> demand;
  StateBounds bounds;
  double truncation_eps = kDefaultTruncationEps;

  [[nodiscard]] double order_cost(int q) const { return q > 0 ? costs.K + costs.z * q : 0.0; }
  [[nodiscard]] double transship_cost(int w) const {
    const int a = w < 0 ? -w : w;
    return a > 0 ? costs.R + costs.v * a : 0.0;
  }

  /// Throws ConfigError / DomainError on invalid data.
  void validate() const;
  /// Soft checks of the experimental regime (K > R, K <= 2R, v < b).
  [[nodiscard]] std::vector<std::string> regime_warnings() const;

  /// Lattice [-D, D + q_max] with q_max = D, where D is the largest total of
  /// per-period maximum (truncated) demands over the two locations.
  static StateBounds default_bounds(const std::array<DemandSpec, 2>& demand, int horizon, double eps);
};

/// Discretized per-period pmfs of both locations, index [location][period - 1].
struct DemandTable {
  std::array<std::vector<DiscreteDist>, 2> periods;

  explicit DemandTable(const Instance& inst);
  [[nodiscard]] const DiscreteDist& at(int location, int period) const {
    return periods[static_cast<std::size_t>(location)][static_cast<std::size_t>(period - 1)];
  }
};

}  // namespace tship
