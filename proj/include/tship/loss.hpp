#pragma once

#include <variant>
#include <vector>

#include "tship/demand.hpp"

namespace tship {

struct NormalDist {
  double mu = 0.0;
  double sigma = 1.0;
};

/// A random variable the loss machinery can evaluate: an integer pmf or a Normal.
using Distribution = std::variant<DiscreteDist, NormalDist>;

double mean_of(const Distribution& d);

/// First-order loss L(x) = E[max(w - x, 0)] and its complement E[max(x - w, 0)].
struct LossEval {
  double x = 0.0;
  double loss = 0.0;
  double complement = 0.0;
};

LossEval loss_exact(double x, const Distribution& d);

/// N adjacent regions of the support with their probabilities and conditional means.
struct Partition {
  std::vector<double> region_probs;
  std::vector<double> cond_means;

  [[nodiscard]] std::size_t n_regions() const { return region_probs.size(); }
  /// Throws DomainError when an invariant is violated.
  void validate(double mean) const;
};

/// Normal: minimax standard-normal partition scaled by (mu, sigma).
/// Discrete: equal-probability regions cut at quantiles (atoms are split between
/// neighbouring regions); regions with coinciding conditional means are merged.
Partition build_partition(const Distribution& d, int n_regions);

/// Partition of the standard normal minimizing the maximum gap of the lower bound.
/// N = 10 comes from a shipped table; other N are computed and cached.
Partition standard_normal_partition(int n_regions);

struct MinimaxPartition {
  std::vector<double> breakpoints;  // N - 1 interior cut points
  Partition partition;
  double max_error = 0.0;
};

/// Equalizes the bound error at every conditional mean by nested bisection:
/// the outer search is over the common error level, the inner one places each
/// successive breakpoint.
MinimaxPartition optimize_standard_normal_partition(int n_regions);

struct AffineMinorant {
  double slope = 0.0;
  double intercept = 0.0;
  [[nodiscard]] double operator()(double x) const { return slope * x + intercept; }
};

/// Affine minorants H_0..H_N of the complementary loss and B_0..B_N of the loss.
struct PiecewiseBounds {
  std::vector<AffineMinorant> complement;
  std::vector<AffineMinorant> loss;

  [[nodiscard]] double complement_bound(double x) const;
  [[nodiscard]] double loss_bound(double x) const;
};

PiecewiseBounds piecewise_lower_bounds(const Partition& part, double mean);

}  // namespace tship
