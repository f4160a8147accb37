#include "tship/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "tship/errors.hpp"
#include "tship/stats.hpp"

namespace tship {

namespace {

// Minimax partition of N(0,1) into 10 regions (symmetric), as produced by
// optimize_standard_normal_partition(10).
constexpr double kNormal10Probs[] = {
    0.04206108420763477, 0.0836356495308449,  0.11074334596058821, 0.1276821455299152,  0.13587777477101692,
    0.13587777477101692, 0.1276821455299152,  0.11074334596058821, 0.0836356495308449,  0.04206108420763477,
};
constexpr double kNormal10Means[] = {
    -2.133986195498256,  -1.3976822972668839, -0.918199946431143,  -0.5265753462727588, -0.17199013069262026,
    0.17199013069262026, 0.5265753462727588,  0.918199946431143,   1.3976822972668839,  2.133986195498256,
};

double std_complement(double x) { return x * stats::normal_cdf(x) + stats::normal_pdf(x); }

struct Region {
  double prob;
  double mean;
};

// Region of N(0,1) between a and b (either may be infinite).
Region normal_region(double a, double b) {
  const double fa = std::isinf(a) ? 0.0 : stats::normal_pdf(a);
  const double fb = std::isinf(b) ? 0.0 : stats::normal_pdf(b);
  const double Fa = std::isinf(a) ? 0.0 : stats::normal_cdf(a);
  const double Fb = std::isinf(b) ? 1.0 : stats::normal_cdf(b);
  const double p = Fb - Fa;
  return {p, (fa - fb) / p};
}

struct Shot {
  bool overshoot = false;  // target error too large to place all regions
  double last_error = 0.0;
  std::vector<double> cuts;
};

Shot shoot(int n, double target) {
  Shot shot;
  double a = -std::numeric_limits<double>::infinity();
  double cum_p = 0.0;
  double cum_pm = 0.0;
  const auto error_at = [&](const Region& r) { return std_complement(r.mean) - (cum_p * r.mean - cum_pm); };
  for (int k = 1; k < n; ++k) {
    const Region open = normal_region(a, std::numeric_limits<double>::infinity());
    if (error_at(open) <= target) {
      shot.overshoot = true;
      return shot;
    }
    double lo = std::isinf(a) ? -12.0 : a;
    double hi = std::max(lo, 0.0) + 12.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (error_at(normal_region(a, mid)) < target) lo = mid; else hi = mid;
    }
    const double b = 0.5 * (lo + hi);
    const Region r = normal_region(a, b);
    cum_p += r.prob;
    cum_pm += r.prob * r.mean;
    shot.cuts.push_back(b);
    a = b;
  }
  shot.last_error = error_at(normal_region(a, std::numeric_limits<double>::infinity()));
  return shot;
}

Partition partition_from_cuts(const std::vector<double>& cuts) {
  Partition p;
  double a = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= cuts.size(); ++k) {
    const double b = k < cuts.size() ? cuts[k] : std::numeric_limits<double>::infinity();
    const Region r = normal_region(a, b);
    p.region_probs.push_back(r.prob);
    p.cond_means.push_back(r.mean);
    a = b;
  }
  return p;
}

Partition discrete_partition(const DiscreteDist& d, int n) {
  const auto atoms = std::count_if(d.pmf.begin(), d.pmf.end(), [](double p) { return p > 0.0; });
  if (n > atoms)
    throw DomainError(fmt::format("{} regions requested for a pmf with {} support points", n, atoms));
  const double width = 1.0 / n;
  std::vector<Region> regions;
  double mass = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < d.pmf.size(); ++i) {
    double left = d.pmf[i];
    const double value = d.support_min + static_cast<double>(i);
    while (left > 0.0) {
      const bool last = static_cast<int>(regions.size()) == n - 1;
      const double take = last ? left : std::min(left, width - mass);
      mass += take;
      weighted += take * value;
      left -= take;
      if (!last && mass >= width * (1.0 - 1e-12)) {
        regions.push_back({mass, weighted / mass});
        mass = weighted = 0.0;
        if (left < 1e-15) left = 0.0;
      }
    }
  }
  if (mass > 0.0) regions.push_back({mass, weighted / mass});

  Partition p;
  for (const auto& r : regions) {
    if (!p.cond_means.empty() && r.mean <= p.cond_means.back() + 1e-12) {
      // same atom spans both regions
      double& q = p.region_probs.back();
      double& m = p.cond_means.back();
      m = (q * m + r.prob * r.mean) / (q + r.prob);
      q += r.prob;
    } else {
      p.region_probs.push_back(r.prob);
      p.cond_means.push_back(r.mean);
    }
  }
  return p;
}

}  // namespace

double mean_of(const Distribution& d) {
  return std::visit(
      [](const auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, NormalDist>) return v.mu;
        else return v.mean();
      },
      d);
}

LossEval loss_exact(double x, const Distribution& d) {
  LossEval e{x, 0.0, 0.0};
  if (const auto* n = std::get_if<NormalDist>(&d)) {
    if (n->sigma <= 0.0) {
      e.loss = std::max(n->mu - x, 0.0);
    } else {
      const double z = (x - n->mu) / n->sigma;
      e.loss = n->sigma * (stats::normal_pdf(z) - z * stats::normal_cdf(-z));
    }
    e.complement = e.loss + (x - n->mu);
    return e;
  }
  const auto& dd = std::get<DiscreteDist>(d);
  double loss = 0.0;
  double complement = 0.0;
  for (std::size_t i = 0; i < dd.pmf.size(); ++i) {
    const double w = dd.support_min + static_cast<double>(i);
    if (w > x) loss += dd.pmf[i] * (w - x);
    else complement += dd.pmf[i] * (x - w);
  }
  e.loss = loss;
  e.complement = complement;
  return e;
}

void Partition::validate(double mean) const {
  if (region_probs.empty() || region_probs.size() != cond_means.size()) throw DomainError("malformed partition");
  double total = 0.0;
  double first = 0.0;
  for (std::size_t k = 0; k < region_probs.size(); ++k) {
    if (!(region_probs[k] > 0.0)) throw DomainError("partition region with zero probability");
    if (k > 0 && !(cond_means[k] > cond_means[k - 1])) throw DomainError("conditional means not increasing");
    total += region_probs[k];
    first += region_probs[k] * cond_means[k];
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError(fmt::format("partition mass {} != 1", total));
  if (std::abs(first - mean) > 1e-6 * std::max(1.0, std::abs(mean)))
    throw DomainError(fmt::format("partition mean {} != {}", first, mean));
}

MinimaxPartition optimize_standard_normal_partition(int n) {
  if (n < 1) throw DomainError("need at least one region");
  MinimaxPartition out;
  if (n == 1) {
    out.partition = partition_from_cuts({});
    out.max_error = std_complement(0.0);
    return out;
  }
  double lo = 0.0;
  double hi = std_complement(0.0);
  Shot best;
  for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
    const double mid = 0.5 * (lo + hi);
    Shot s = shoot(n, mid);
    if (s.overshoot || s.last_error < mid) {
      hi = mid;
    } else {
      lo = mid;
      best = std::move(s);
    }
  }
  if (best.cuts.empty()) best = shoot(n, lo);
  out.breakpoints = best.cuts;
  out.partition = partition_from_cuts(best.cuts);
  out.max_error = hi;
  return out;
}

Partition standard_normal_partition(int n) {
  if (n == 10) {
    Partition p;
    p.region_probs.assign(std::begin(kNormal10Probs), std::end(kNormal10Probs));
    p.cond_means.assign(std::begin(kNormal10Means), std::end(kNormal10Means));
    return p;
  }
  static std::mutex mutex;
  static std::map<int, Partition> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, optimize_standard_normal_partition(n).partition).first;
  return it->second;
}

Partition build_partition(const Distribution& d, int n_regions) {
  if (n_regions < 1) throw DomainError("need at least one region");
  if (const auto* nd = std::get_if<NormalDist>(&d)) {
    Partition p = standard_normal_partition(n_regions);
    for (auto& m : p.cond_means) m = nd->mu + nd->sigma * m;
    return p;
  }
  return discrete_partition(std::get<DiscreteDist>(d), n_regions);
}

double PiecewiseBounds::complement_bound(double x) const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& f : complement) v = std::max(v, f(x));
  return v;
}

double PiecewiseBounds::loss_bound(double x) const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& f : loss) v = std::max(v, f(x));
  return v;
}

PiecewiseBounds piecewise_lower_bounds(const Partition& part, double mean) {
  PiecewiseBounds b;
  double cum_p = 0.0;
  double cum_pm = 0.0;
  b.complement.push_back({0.0, 0.0});
  b.loss.push_back({-1.0, mean});
  for (std::size_t k = 0; k < part.n_regions(); ++k) {
    cum_p += part.region_probs[k];
    cum_pm += part.region_probs[k] * part.cond_means[k];
    b.complement.push_back({cum_p, -cum_pm});
    b.loss.push_back({cum_p - 1.0, mean - cum_pm});
  }
  return b;
}

}  // namespace tship
