#pragma once

#include <array>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "tship/instance.hpp"
#include "tship/loss.hpp"
#include "tship/milp.hpp"
#include "tship/sdp.hpp"

namespace tship {

inline constexpr int kDefaultRegions = 10;

/// Demand accumulated from the start period to t at one location.
struct CumulativeDemand {
  Partition partition;
  double mean = 0.0;
  double max = 0.0;  // largest value of the truncated support
};

/// Per-period cumulative demand data, index [t - start][location].
struct Lp1Partitions {
  int start = 1;
  std::vector<std::array<CumulativeDemand, 2>> periods;
};

/// Discrete families: exact convolution of the truncated pmfs. Normal: the
/// continuous sum N(sum mu, sqrt(sum sigma^2)).
Lp1Partitions make_lp1_partitions(const Instance& inst, int start, int n_regions = kDefaultRegions);

enum class Lp1Encoding {
  Minorants,  // H >= every affine minorant, B likewise
  Segments,   // convex piecewise split of the inventory position; same optimum, fewer rows
};

struct StaticModel {
  MilpModel model;
  int start = 1;
  int horizon = 0;
  Lp1Encoding encoding = Lp1Encoding::Minorants;
  State opening;
  double big_m = 0.0;
  // variable indices per period offset [t - start]
  std::vector<int> q1, q2, w_plus, w_minus, d_plus, d_minus, x1, x2;
  std::vector<int> h1, h2, b1, b2;  // -1 when the encoding has no such variable
};

StaticModel build_lp1(const Instance& inst, const State& opening, const Lp1Partitions& partitions,
                      Lp1Encoding encoding = Lp1Encoding::Minorants);

struct PlanPeriod {
  double W = 0.0;
  double Q1 = 0.0;
  double Q2 = 0.0;
  Action rounded;
  std::array<double, 2> inventory{};  // expected end-of-period level
  std::array<double, 2> overage{};    // H
  std::array<double, 2> shortage{};   // B
};

struct StaticPlan {
  SolveStatus status = SolveStatus::Error;
  double objective = kInf;
  int start = 1;
  std::vector<PlanPeriod> periods;  // start..T
  long nodes = 0;

  [[nodiscard]] bool ok() const { return status == SolveStatus::Optimal; }
  /// Rounded actions padded with zero actions for periods before start, for plan_policy.
  [[nodiscard]] std::vector<Action> actions() const;
};

/// Half-up rounding of a plan quantity.
int round_half_up(double x);

StaticPlan solve_static(const StaticModel& model, const Instance& inst, const Lp1Partitions& partitions,
                        const MilpBackend& backend);
StaticPlan solve_static(const StaticModel& model, const Instance& inst, const Lp1Partitions& partitions);

/// LP-1 solves for one instance, with partitions built once per start period and
/// plans cached per (start, opening). Not thread-safe; use one per worker.
class Lp1Solver {
 public:
  Lp1Solver(const Instance& inst, int n_regions = kDefaultRegions, Lp1Encoding encoding = Lp1Encoding::Segments,
            BranchAndBoundOptions options = {});

  const StaticPlan& solve(int start, const State& opening);
  [[nodiscard]] std::size_t cache_size() const { return cache_.size(); }

 private:
  const Instance& inst_;
  int n_regions_;
  Lp1Encoding encoding_;
  BuiltinBackend backend_;
  std::map<int, Lp1Partitions> partitions_;
  std::map<std::tuple<int, int, int>, StaticPlan> cache_;
};

}  // namespace tship
