#pragma once

#include <cmath>
#include <numbers>

namespace tship::stats {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Quantile of the standard normal distribution.
double normal_quantile(double p);
/// Quantile of Student's t with `dof` degrees of freedom.
double student_t_quantile(double p, double dof);

}  // namespace tship::stats
