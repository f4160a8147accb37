#include "tship/instance.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tship/errors.hpp"

namespace tship {

void Instance::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  const auto& c = costs;
  for (double x : {c.K, c.z, c.R, c.v, c.h, c.b}) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("cost parameters must be finite and nonnegative");
  }
  if (!(c.h > 0.0) || !(c.b > 0.0)) throw ConfigError("holding and penalty costs must be positive");
  for (const auto& d : demand) {
    d.validate();
    if (d.horizon() != horizon)
      throw ConfigError(fmt::format("demand horizon {} does not match instance horizon {}", d.horizon(), horizon));
  }
  if (bounds.i_min > bounds.i_max) throw ConfigError("empty state lattice");
  if (bounds.q_max < 0) throw ConfigError("q_max must be nonnegative");
  if (!(truncation_eps > 0.0 && truncation_eps < 0.5)) throw ConfigError("truncation eps must lie in (0, 0.5)");
}

std::vector<std::string> Instance::regime_warnings() const {
  std::vector<std::string> out;
  if (!(costs.K > costs.R)) out.push_back(fmt::format("K={} is not above R={}", costs.K, costs.R));
  if (!(costs.K <= 2.0 * costs.R)) out.push_back(fmt::format("K={} exceeds 2R={}", costs.K, 2.0 * costs.R));
  if (!(costs.v < costs.b)) out.push_back(fmt::format("v={} is not below b={}", costs.v, costs.b));
  return out;
}

StateBounds Instance::default_bounds(const std::array<DemandSpec, 2>& demand, int horizon, double eps) {
  int total = 0;
  for (const auto& d : demand) {
    int sum = 0;
    for (int t = 1; t <= horizon; ++t) sum += discretize(d, t, eps).support_max();
    total = std::max(total, sum);
  }
  return {-total, 2 * total, total};
}

DemandTable::DemandTable(const Instance& inst) {
  for (std::size_t j = 0; j < 2; ++j) {
    periods[j].reserve(static_cast<std::size_t>(inst.horizon));
    for (int t = 1; t <= inst.horizon; ++t) periods[j].push_back(discretize(inst.demand[j], t, inst.truncation_eps));
  }
}

}  // namespace tship
