#include <cmath>
#include <numbers>

#include "doctest.h"
#include "tship/errors.hpp"
#include "tship/loss.hpp"
#include "tship/stats.hpp"

using namespace tship;

namespace {

// Composite Simpson rule for E[max(w - x, 0)] under N(mu, sigma).
double normal_loss_by_quadrature(double x, double mu, double sigma) {
  const double a = std::max(x, mu - 12 * sigma);
  const double b = mu + 12 * sigma;
  if (a >= b) return 0.0;
  const int n = 20000;
  const double h = (b - a) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = a + i * h;
    const double f = (w - x) * stats::normal_pdf((w - mu) / sigma) / sigma;
    s += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  return s * h / 3.0;
}

struct Gap {
  double smallest = std::numeric_limits<double>::infinity();  // negative = bound above exact value
  double largest = 0.0;
};

// Exact loss minus its piecewise bound over a 1001-point grid.
Gap grid_gap(const Distribution& d, int n_regions, double lo, double hi) {
  const auto part = build_partition(d, n_regions);
  const auto bounds = piecewise_lower_bounds(part, mean_of(d));
  Gap g;
  for (int k = 0; k <= 1000; ++k) {
    const double x = lo + (hi - lo) * k / 1000.0;
    const auto e = loss_exact(x, d);
    for (double slack : {e.complement - bounds.complement_bound(x), e.loss - bounds.loss_bound(x)}) {
      g.smallest = std::min(g.smallest, slack);
      g.largest = std::max(g.largest, slack);
    }
  }
  return g;
}

}  // namespace

TEST_CASE("loss_exact") {
  SUBCASE("zero inventory incurs the mean as loss") {
    const auto d = discretize(DemandSpec::poisson({3.0}), 1, 1e-14);
    const auto e = loss_exact(0.0, d);
    CHECK(e.loss == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(e.complement == doctest::Approx(0.0));
  }
  SUBCASE("standard normal at zero") {
    const auto e = loss_exact(0.0, NormalDist{0.0, 1.0});
    CHECK(e.loss == doctest::Approx(0.39894).epsilon(1e-5));
    CHECK(e.loss == doctest::Approx(normal_loss_by_quadrature(0.0, 0.0, 1.0)).epsilon(1e-9));
  }
  SUBCASE("normal closed form against quadrature") {
    for (double x : {-3.0, 4.0, 9.5, 12.0, 20.0}) {
      CHECK(loss_exact(x, NormalDist{10.0, 2.5}).loss ==
            doctest::Approx(normal_loss_by_quadrature(x, 10.0, 2.5)).epsilon(1e-8));
    }
  }
  SUBCASE("point mass") {
    const auto e = loss_exact(4.0, DiscreteDist::point_mass(4));
    CHECK(e.loss == 0.0);
    CHECK(e.complement == 0.0);
  }
}

TEST_CASE("loss identity and convexity") {
  const std::vector<Distribution> dists = {
      NormalDist{5.0, 0.5}, NormalDist{20.0, 2.0}, discretize(DemandSpec::poisson({7.0}), 1),
      DiscreteDist{2, {0.1, 0.0, 0.6, 0.3}}};
  for (const auto& d : dists) {
    const double mu = mean_of(d);
    std::vector<LossEval> grid;
    for (int k = 0; k <= 400; ++k) grid.push_back(loss_exact(-5.0 + k * 0.1, d));
    for (const auto& e : grid) CHECK(std::abs(e.complement - e.loss - (e.x - mu)) < 1e-12 * std::max(1.0, mu));
    for (std::size_t k = 1; k + 1 < grid.size(); ++k) {
      CHECK(grid[k - 1].loss - 2 * grid[k].loss + grid[k + 1].loss >= -1e-9);
      CHECK(grid[k - 1].complement - 2 * grid[k].complement + grid[k + 1].complement >= -1e-9);
    }
  }
}

TEST_CASE("build_partition examples") {
  SUBCASE("standard normal halves") {
    const auto p = build_partition(NormalDist{0.0, 1.0}, 2);
    REQUIRE(p.n_regions() == 2);
    CHECK(p.region_probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.cond_means[0] == doctest::Approx(-std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-10));
    CHECK(p.cond_means[1] == doctest::Approx(0.79788).epsilon(1e-5));
  }
  SUBCASE("uniform pmf halves") {
    const auto p = build_partition(DiscreteDist{0, {0.25, 0.25, 0.25, 0.25}}, 2);
    REQUIRE(p.n_regions() == 2);
    CHECK(p.region_probs[0] == doctest::Approx(0.5));
    CHECK(p.cond_means[0] == doctest::Approx(0.5));
    CHECK(p.cond_means[1] == doctest::Approx(2.5));
  }
  SUBCASE("single region is the mean") {
    const auto d = discretize(DemandSpec::poisson({4.0}), 1);
    const auto p = build_partition(d, 1);
    REQUIRE(p.n_regions() == 1);
    CHECK(p.region_probs[0] == doctest::Approx(1.0));
    CHECK(p.cond_means[0] == doctest::Approx(d.mean()).epsilon(1e-12));
    const auto q = build_partition(NormalDist{3.0, 2.0}, 1);
    CHECK(q.cond_means[0] == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("too many regions for the support") {
    CHECK_THROWS_AS(build_partition(DiscreteDist{0, {0.5, 0.0, 0.5}}, 3), DomainError);
  }
}

TEST_CASE("partitions satisfy their invariants") {
  for (int n : {2, 3, 5, 10, 16}) {
    const NormalDist nd{12.0, 1.2};
    build_partition(nd, n).validate(12.0);
    for (double lambda : {2.0, 5.0, 20.0, 55.0}) {
      const auto d = discretize(DemandSpec::poisson({lambda}), 1);
      if (static_cast<int>(d.size()) < n) continue;
      build_partition(d, n).validate(d.mean());
    }
  }
  // heavy atom shared by several quantile regions
  const DiscreteDist lumpy{0, {0.9, 0.05, 0.05}};
  const auto p = build_partition(lumpy, 3);
  p.validate(lumpy.mean());
  CHECK(p.n_regions() == 2);
}

TEST_CASE("shipped ten-region table matches the optimizer") {
  const auto shipped = standard_normal_partition(10);
  const auto computed = optimize_standard_normal_partition(10);
  REQUIRE(computed.partition.n_regions() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(std::abs(shipped.region_probs[k] - computed.partition.region_probs[k]) < 1e-9);
    CHECK(std::abs(shipped.cond_means[k] - computed.partition.cond_means[k]) < 1e-9);
  }
  // the equalized error is the maximum gap of the bound
  const double largest = grid_gap(NormalDist{0.0, 1.0}, 10, -6.0, 6.0).largest;
  CHECK(largest <= computed.max_error + 1e-9);
  CHECK(largest >= 0.95 * computed.max_error);
}

TEST_CASE("piecewise_lower_bounds") {
  SUBCASE("empty prefix gives the trivial minorants") {
    const auto b = piecewise_lower_bounds(build_partition(NormalDist{5.0, 1.0}, 4), 5.0);
    CHECK(b.complement[0](3.7) == 0.0);
    CHECK(b.loss[0](3.7) == doctest::Approx(5.0 - 3.7));
    CHECK(b.complement.size() == 5);
  }
  SUBCASE("two regions touch the loss at the breakpoint") {
    const auto b = piecewise_lower_bounds(build_partition(NormalDist{0.0, 1.0}, 2), 0.0);
    CHECK(b.complement[1](0.0) == doctest::Approx(0.39894).epsilon(1e-5));
    CHECK(b.complement_bound(0.0) == doctest::Approx(loss_exact(0.0, NormalDist{0.0, 1.0}).complement).epsilon(1e-9));
  }
}

TEST_CASE("sandwich and monotone refinement") {
  const std::vector<std::pair<Distribution, std::pair<double, double>>> cases = {
      {NormalDist{10.0, 1.0}, {4.0, 16.0}},
      {NormalDist{20.0, 6.0}, {-16.0, 56.0}},
      {discretize(DemandSpec::poisson({5.0}), 1), {-2.0, 20.0}},
      {convolve(discretize(DemandSpec::poisson({5.0}), 1), discretize(DemandSpec::poisson({9.0}), 1)), {0.0, 40.0}},
  };
  for (const auto& [d, range] : cases) {
    double previous = std::numeric_limits<double>::infinity();
    for (int n : {2, 4, 8, 16}) {
      const Gap gap = grid_gap(d, n, range.first, range.second);
      CHECK(gap.smallest >= -1e-9);
      CHECK(gap.largest <= previous + 1e-12);
      previous = gap.largest;
    }
  }
}
