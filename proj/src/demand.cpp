#include "tship/demand.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "tship/errors.hpp"
#include "tship/stats.hpp"

namespace tship {

double DiscreteDist::prob(int k) const {
  if (k < support_min || k > support_max()) return 0.0;
  return pmf[static_cast<std::size_t>(k - support_min)];
}

double DiscreteDist::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) m += pmf[i] * (support_min + static_cast<int>(i));
  return m;
}

double DiscreteDist::variance() const {
  const double mu = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const double dx = support_min + static_cast<int>(i) - mu;
    v += pmf[i] * dx * dx;
  }
  return v;
}

double DiscreteDist::total_mass() const { return std::accumulate(pmf.begin(), pmf.end(), 0.0); }

DiscreteDist DiscreteDist::point_mass(int k) { return DiscreteDist{k, {1.0}}; }

DiscreteDist DiscreteDist::from_pairs(std::span<const std::pair<int, double>> pairs) {
  if (pairs.empty()) throw DomainError("empty pmf");
  int lo = pairs.front().first;
  int hi = lo;
  for (const auto& [k, p] : pairs) {
    if (!(p >= 0.0)) throw DomainError(fmt::format("negative probability at {}", k));
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  DiscreteDist d{lo, std::vector<double>(static_cast<std::size_t>(hi - lo + 1), 0.0)};
  for (const auto& [k, p] : pairs) d.pmf[static_cast<std::size_t>(k - lo)] += p;
  const double mass = d.total_mass();
  if (std::abs(mass - 1.0) > 1e-9) throw DomainError(fmt::format("pmf mass {} differs from 1", mass));
  for (auto& p : d.pmf) p /= mass;
  return d;
}

std::string_view to_string(DemandFamily f) {
  switch (f) {
    case DemandFamily::Poisson: return "poisson";
    case DemandFamily::Normal: return "normal";
    case DemandFamily::Empirical: return "empirical";
  }
  return "?";
}

DemandFamily parse_family(std::string_view s) {
  if (s == "poisson" || s == "Poisson") return DemandFamily::Poisson;
  if (s == "normal" || s == "Normal") return DemandFamily::Normal;
  if (s == "empirical" || s == "Empirical") return DemandFamily::Empirical;
  throw ConfigError(fmt::format("unknown demand family '{}'", s));
}

int DemandSpec::horizon() const {
  return static_cast<int>(family == DemandFamily::Empirical ? empirical.size() : means.size());
}

double DemandSpec::mean(int period) const {
  if (family == DemandFamily::Empirical) return empirical.at(static_cast<std::size_t>(period - 1)).mean();
  return means.at(static_cast<std::size_t>(period - 1));
}

double DemandSpec::stddev(int period) const {
  switch (family) {
    case DemandFamily::Poisson: return std::sqrt(mean(period));
    case DemandFamily::Normal: return cv * mean(period);
    case DemandFamily::Empirical: return std::sqrt(empirical.at(static_cast<std::size_t>(period - 1)).variance());
  }
  return 0.0;
}

void DemandSpec::validate() const {
  if (horizon() == 0) throw ConfigError("demand spec has an empty horizon");
  if (family == DemandFamily::Empirical) {
    for (const auto& d : empirical) {
      if (d.pmf.empty()) throw ConfigError("empirical pmf is empty");
      if (d.support_min < 0) throw DomainError("empirical demand must be nonnegative");
      if (std::abs(d.total_mass() - 1.0) > 1e-9) throw DomainError("empirical pmf is not normalized");
    }
    return;
  }
  for (double m : means) {
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError(fmt::format("demand mean {} must be positive", m));
  }
  if (family == DemandFamily::Normal && !(cv > 0.0)) throw DomainError("normal demand needs cv > 0");
}

DemandSpec DemandSpec::poisson(std::vector<double> means) {
  DemandSpec s{DemandFamily::Poisson, std::move(means), 0.0, {}};
  s.validate();
  return s;
}

DemandSpec DemandSpec::normal(std::vector<double> means, double cv) {
  DemandSpec s{DemandFamily::Normal, std::move(means), cv, {}};
  s.validate();
  return s;
}

DemandSpec DemandSpec::from_pmfs(std::vector<DiscreteDist> pmfs) {
  DemandSpec s{DemandFamily::Empirical, {}, 0.0, std::move(pmfs)};
  s.validate();
  return s;
}

DemandSpec DemandSpec::deterministic(const std::vector<int>& values) {
  std::vector<DiscreteDist> pmfs;
  pmfs.reserve(values.size());
  for (int v : values) pmfs.push_back(DiscreteDist::point_mass(v));
  return from_pmfs(std::move(pmfs));
}

namespace {

void renormalize(std::vector<double>& pmf) {
  const double mass = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  for (auto& p : pmf) p /= mass;
}

DiscreteDist discretize_poisson(double lambda, double eps) {
  std::vector<double> pmf;
  double cdf = 0.0;
  for (int k = 0;; ++k) {
    const double p = std::exp(-lambda + k * std::log(lambda) - std::lgamma(k + 1.0));
    pmf.push_back(p);
    cdf += p;
    if (cdf >= 1.0 - eps) break;
    if (k > 100000) throw DomainError("poisson support did not converge");
  }
  renormalize(pmf);
  return {0, std::move(pmf)};
}

DiscreteDist discretize_normal(double mu, double sigma, double eps) {
  const auto cdf = [&](double x) { return stats::normal_cdf((x - mu) / sigma); };
  // smallest k with CDF(k + 1/2) >= eps, and with CDF(k + 1/2) >= 1 - eps
  const double z = stats::normal_quantile(eps);
  int lo = static_cast<int>(std::floor(mu + z * sigma - 0.5)) - 1;
  while (cdf(lo + 0.5) < eps) ++lo;
  while (lo > 0 && cdf(lo - 0.5) >= eps) --lo;
  int hi = static_cast<int>(std::floor(mu - z * sigma - 0.5)) - 1;
  while (cdf(hi + 0.5) < 1.0 - eps) ++hi;
  while (cdf(hi - 0.5) >= 1.0 - eps) --hi;
  lo = std::max(lo, 0);
  hi = std::max(hi, lo);
  std::vector<double> pmf;
  pmf.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (int k = lo; k <= hi; ++k) {
    // negative demand is folded into zero
    const double left = (k == 0) ? 0.0 : cdf(k - 0.5);
    pmf.push_back(cdf(k + 0.5) - left);
  }
  renormalize(pmf);
  return {lo, std::move(pmf)};
}

}  // namespace

DiscreteDist discretize(const DemandSpec& spec, int period, double truncation_eps) {
  if (period < 1 || period > spec.horizon())
    throw DomainError(fmt::format("period {} outside horizon 1..{}", period, spec.horizon()));
  if (!(truncation_eps > 0.0 && truncation_eps < 0.5))
    throw DomainError(fmt::format("truncation eps {} leaves a degenerate support", truncation_eps));
  switch (spec.family) {
    case DemandFamily::Poisson: {
      const double m = spec.mean(period);
      if (!(m > 0.0)) throw DomainError("poisson mean must be positive");
      return discretize_poisson(m, truncation_eps);
    }
    case DemandFamily::Normal: {
      const double m = spec.mean(period);
      if (!(m > 0.0) || !(spec.cv > 0.0)) throw DomainError("normal mean and cv must be positive");
      return discretize_normal(m, spec.cv * m, truncation_eps);
    }
    case DemandFamily::Empirical: return spec.empirical[static_cast<std::size_t>(period - 1)];
  }
  throw DomainError("unknown family");
}

DiscreteDist convolve(const DiscreteDist& a, const DiscreteDist& b) {
  DiscreteDist out{a.support_min + b.support_min, std::vector<double>(a.size() + b.size() - 1, 0.0)};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.pmf[i] == 0.0) continue;
    for (std::size_t j = 0; j < b.size(); ++j) out.pmf[i + j] += a.pmf[i] * b.pmf[j];
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct PatternName {
  PatternId id;
  std::string_view name;
};

constexpr PatternName kPatternNames[] = {
    {PatternId::LCY1, "LCY1"}, {PatternId::LCY2, "LCY2"}, {PatternId::SIN1, "SIN1"}, {PatternId::SIN2, "SIN2"},
    {PatternId::STAT, "STAT"}, {PatternId::RAND, "RAND"}, {PatternId::EMP1, "EMP1"}, {PatternId::EMP2, "EMP2"},
    {PatternId::EMP3, "EMP3"}, {PatternId::EMP4, "EMP4"}, {PatternId::LCY, "LCY"},   {PatternId::SIN, "SIN"},
    {PatternId::EMP, "EMP"},
};

bool four_period_only(PatternId p) {
  switch (p) {
    case PatternId::LCY1:
    case PatternId::LCY2:
    case PatternId::SIN1:
    case PatternId::SIN2:
    case PatternId::EMP1:
    case PatternId::EMP2:
    case PatternId::EMP3:
    case PatternId::EMP4: return true;
    default: return false;
  }
}

double logistic_ramp(int t, int horizon) {
  return 0.3 + 0.7 / (1.0 + std::exp(-(t - horizon / 2.0)));
}

double triangle(int t, int horizon) {
  const int peak = horizon / 2 + 1;
  const int width = std::max({peak - 1, horizon - peak, 1});
  return 0.3 + 0.7 * (1.0 - std::abs(t - peak) / static_cast<double>(width));
}

}  // namespace

std::string_view to_string(PatternId p) {
  for (const auto& n : kPatternNames)
    if (n.id == p) return n.name;
  return "?";
}

PatternId parse_pattern(std::string_view s) {
  if (s == "STA") return PatternId::STAT;
  for (const auto& n : kPatternNames)
    if (n.name == s) return n.id;
  throw ConfigError(fmt::format("unknown demand pattern '{}'", s));
}

std::vector<PatternId> four_period_patterns() {
  return {PatternId::LCY1, PatternId::LCY2, PatternId::SIN1, PatternId::SIN2, PatternId::STAT,
          PatternId::RAND, PatternId::EMP1, PatternId::EMP2, PatternId::EMP3, PatternId::EMP4};
}

std::vector<PatternId> ten_period_patterns() {
  return {PatternId::LCY, PatternId::SIN, PatternId::STAT, PatternId::RAND, PatternId::EMP};
}

PatternTables PatternTables::defaults() {
  PatternTables t;
  t.tables["EMP1"] = {0.55, 0.95, 0.40, 0.80};
  t.tables["EMP2"] = {0.90, 0.45, 0.70, 1.00};
  t.tables["EMP3"] = {0.35, 0.75, 1.00, 0.50};
  t.tables["EMP4"] = {0.80, 0.60, 0.30, 0.95};
  t.tables["EMP"] = {0.47, 0.81, 0.32, 0.96, 0.58, 0.74, 0.41, 1.00, 0.63, 0.85};
  return t;
}

std::vector<double> make_pattern(PatternId tag, int horizon, double scale, const PatternTables& tables) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError(fmt::format("pattern scale {} must be positive", scale));
  if (four_period_only(tag)) {
    if (horizon != 4)
      throw ConfigError(fmt::format("pattern {} is defined for 4 periods, not {}", to_string(tag), horizon));
  } else if (horizon < 1 || horizon > 10) {
    throw ConfigError(fmt::format("pattern {} supports 1..10 periods, not {}", to_string(tag), horizon));
  }

  std::vector<double> shape;
  if (auto it = tables.tables.find(std::string(to_string(tag))); it != tables.tables.end()) {
    if (static_cast<int>(it->second.size()) < horizon)
      throw ConfigError(fmt::format("pattern table {} has {} entries, need {}", it->first, it->second.size(), horizon));
    shape.assign(it->second.begin(), it->second.begin() + horizon);
  } else {
    // 10-period tags at a reduced horizon are the leading periods of the full pattern
    const int full = four_period_only(tag) ? 4 : (tag == PatternId::STAT || tag == PatternId::RAND ? horizon : 10);
    Rng rng(tables.rand_seed);
    for (int t = 1; t <= full; ++t) {
      const double phase = 2.0 * std::numbers::pi * t / full;
      switch (tag) {
        case PatternId::STAT: shape.push_back(1.0); break;
        case PatternId::SIN1:
        case PatternId::SIN: shape.push_back(1.0 + 0.5 * std::sin(phase)); break;
        case PatternId::SIN2: shape.push_back(1.0 + 0.2 * std::sin(phase)); break;
        case PatternId::LCY1:
        case PatternId::LCY: shape.push_back(logistic_ramp(t, full)); break;
        case PatternId::LCY2: shape.push_back(triangle(t, full)); break;
        case PatternId::RAND: shape.push_back(0.4 + 0.6 * rng.uniform()); break;
        default: throw ConfigError(fmt::format("pattern {} requires a table", to_string(tag)));
      }
    }
    shape.resize(static_cast<std::size_t>(horizon));
  }

  std::vector<double> means;
  means.reserve(shape.size());
  for (double f : shape) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError(fmt::format("pattern {} has a nonpositive entry", to_string(tag)));
    means.push_back(scale * f);
  }
  return means;
}

// ---------------------------------------------------------------------------

double Rng::standard_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int sample(const DiscreteDist& d, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < d.pmf.size(); ++i) {
    acc += d.pmf[i];
    if (u < acc) return d.support_min + static_cast<int>(i);
  }
  return d.support_max();
}

double sample_continuous(const DemandSpec& spec, int period, Rng& rng) {
  if (spec.family == DemandFamily::Normal) return spec.mean(period) + spec.stddev(period) * rng.standard_normal();
  return sample(discretize(spec, period), rng);
}

}  // namespace tship
