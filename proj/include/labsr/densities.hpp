#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace labsr {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Gamma in shape/rate parameterization: E[x] = shape / rate.
inline double log_gamma_pdf(double x, double shape, double rate) {
    if (x <= 0.0) return kNegInf;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// Inverse-gamma with E[x] = scale / (shape - 1) when shape > 1.
inline double log_inv_gamma_pdf(double x, double shape, double scale) {
    if (x <= 0.0) return kNegInf;
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

inline double log_poisson_pmf(long k, double mean) {
    if (k < 0 || mean <= 0.0) return kNegInf;
    return static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0);
}

} // namespace labsr
