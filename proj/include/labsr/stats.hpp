#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace labsr {

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

/// Population variance (divides by n).
inline double variance(std::span<const double> v) {
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
}

/** Linear-interpolation quantile on the sorted order statistics (the common
 *  "type 7" rule: h = (n-1) p).  p must lie in [0, 1].
 */
inline double quantile(std::span<const double> v, double p) {
    if (v.empty()) throw std::invalid_argument("quantile: empty input");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p outside [0, 1]");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const double h = (static_cast<double>(s.size()) - 1.0) * p;
    const std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= s.size()) return s.back();
    return s[i] + (h - static_cast<double>(i)) * (s[i + 1] - s[i]);
}

inline double median(std::span<const double> v) { return quantile(v, 0.5); }

/** Monte Carlo standard error of the mean of a correlated sequence via
 *  non-overlapping batch means.  Requires at least 16 observations; uses
 *  floor(sqrt(n)) batches.
 */
inline double batch_means_se(std::span<const double> draws) {
    if (draws.size() < 16) throw std::invalid_argument("batch_means_se: too few draws");
    const std::size_t n_batches = static_cast<std::size_t>(std::sqrt(static_cast<double>(draws.size())));
    const std::size_t len = draws.size() / n_batches;
    std::vector<double> bm;
    bm.reserve(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        double acc = 0.0;
        for (std::size_t i = b * len; i < (b + 1) * len; ++i) acc += draws[i];
        bm.push_back(acc / static_cast<double>(len));
    }
    const double v = variance(bm) * static_cast<double>(n_batches) /
                     static_cast<double>(n_batches - 1);
    return std::sqrt(v / static_cast<double>(n_batches));
}

} // namespace labsr
