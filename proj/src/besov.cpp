#include "labsr/besov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace labsr {

void GridFunction::validate() const {
    if (values.size() < 2)
        throw std::invalid_argument("GridFunction needs at least two grid points, got " +
                                    std::to_string(values.size()));
}

namespace {

// ~~~~ grid alignment and discrete norms ~~~~

// Number of grid steps in h, or a throw when h is not step-aligned.
long steps_in(const GridFunction& g, int r, double h) {
    if (r < 1) throw std::invalid_argument("finite difference order must be >= 1");
    if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be positive");
    const double ratio = h / g.step();
    const long m = std::lround(ratio);
    if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("step " + std::to_string(h) +
                                    " is not a multiple of the grid step");
    if (static_cast<long>(r) * m > static_cast<long>(g.size()) - 1)
        throw std::invalid_argument("r * h exceeds the domain");
    return m;
}

double binomial(int r, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c *= static_cast<double>(r - k + i) / static_cast<double>(i);
    return c;
}

// Discrete L^p norm of the difference of order r at m grid steps, taken
// directly from the samples so the modulus can scan every h without
// materialising a GridFunction per scale. Left-endpoint Riemann weights over
// the support [0, 1 - r h]; maximum over the support when p is infinite.
double difference_norm(const GridFunction& g, int r, long m, double p) {
    const long n = static_cast<long>(g.size());
    const long last = n - 1 - static_cast<long>(r) * m; // largest supported index
    const bool sup_norm = std::isinf(p);
    double acc = 0.0;
    for (long i = 0; i <= last; ++i) {
        double d = 0.0;
        for (int k = 0; k <= r; ++k) {
            const double sign = (r - k) % 2 == 0 ? 1.0 : -1.0;
            d += sign * binomial(r, k) * g.values[static_cast<std::size_t>(i + k * m)];
        }
        const double ad = std::abs(d);
        if (sup_norm)
            acc = std::max(acc, ad);
        else if (p == 1.0)
            acc += ad;
        else if (p == 2.0)
            acc += ad * ad;
        else
            acc += std::pow(ad, p);
    }
    return sup_norm ? acc : std::pow(acc * g.step(), 1.0 / p);
}

} // namespace

GridFunction finite_difference(const GridFunction& g, int r, double h) {
    g.validate();
    const long m = steps_in(g, r, h);
    GridFunction out;
    out.values.assign(g.size(), 0.0);
    const long last = static_cast<long>(g.size()) - 1 - static_cast<long>(r) * m;
    for (long i = 0; i <= last; ++i) {
        double d = 0.0;
        for (int k = 0; k <= r; ++k) {
            const double sign = (r - k) % 2 == 0 ? 1.0 : -1.0;
            d += sign * binomial(r, k) * g.values[static_cast<std::size_t>(i + k * m)];
        }
        out.values[static_cast<std::size_t>(i)] = d;
    }
    return out;
}

double modulus_of_smoothness(const GridFunction& g, int r, double p, double t) {
    g.validate();
    if (r < 1) throw std::invalid_argument("finite difference order must be >= 1");
    if (!(t > 0.0)) throw std::invalid_argument("scale t must be positive");
    if (!(p > 0.0)) throw std::invalid_argument("integrability p must be positive");
    // Admissible steps: h = m * step with h <= t and r h <= 1.
    const long n = static_cast<long>(g.size());
    long m_max = static_cast<long>(std::floor(t / g.step() + 1e-9));
    m_max = std::min(m_max, (n - 1) / static_cast<long>(r));
    double w = 0.0;
    for (long m = 1; m <= m_max; ++m) w = std::max(w, difference_norm(g, r, m, p));
    return w;
}

double besov_seminorm_estimate(const GridFunction& g, double s, double p, double q,
                               const std::vector<double>& t_grid) {
    g.validate();
    if (!(s > 0.0)) throw std::invalid_argument("smoothness s must be positive");
    if (!(p > 0.0)) throw std::invalid_argument("integrability p must be positive");
    if (!(q > 0.0)) throw std::invalid_argument("summability q must be positive");
    if (t_grid.empty()) throw std::invalid_argument("scale grid is empty");
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > 0.0)) throw std::invalid_argument("scales must be positive");
        if (i > 0 && t_grid[i] <= t_grid[i - 1])
            throw std::invalid_argument("scales must be strictly increasing");
    }
    const int r = static_cast<int>(std::floor(s)) + 1;

    // The modulus is a running supremum over admissible steps, so walk the
    // scales once and fold each new band of steps into the supremum instead
    // of rescanning (0, t] per scale.
    const long n = static_cast<long>(g.size());
    const long m_cap = (n - 1) / static_cast<long>(r);
    std::vector<double> w(t_grid.size(), 0.0);
    double running = 0.0;
    long m = 1;
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
        long m_max = static_cast<long>(std::floor(t_grid[j] / g.step() + 1e-9));
        m_max = std::min(m_max, m_cap);
        for (; m <= m_max; ++m) running = std::max(running, difference_norm(g, r, m, p));
        w[j] = running;
    }

    if (std::isinf(q)) {
        double best = 0.0;
        for (std::size_t j = 0; j < t_grid.size(); ++j)
            best = std::max(best, std::pow(t_grid[j], -s) * w[j]);
        return best;
    }
    // Trapezoid in u = log t: integral of F(t) dt/t = integral of F(e^u) du.
    double integral = 0.0;
    for (std::size_t j = 0; j + 1 < t_grid.size(); ++j) {
        const double fa = std::pow(std::pow(t_grid[j], -s) * w[j], q);
        const double fb = std::pow(std::pow(t_grid[j + 1], -s) * w[j + 1], q);
        integral += 0.5 * (fa + fb) * (std::log(t_grid[j + 1]) - std::log(t_grid[j]));
    }
    return std::pow(integral, 1.0 / q);
}

std::vector<double> log_spaced_t_grid(double t_min, double t_max, std::size_t count) {
    if (!(t_min > 0.0) || !(t_max > t_min))
        throw std::invalid_argument("need 0 < t_min < t_max for a log-spaced grid");
    if (count < 2) throw std::invalid_argument("need at least two scales");
    std::vector<double> out(count);
    const double lo = std::log(t_min), hi = std::log(t_max);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(count - 1);
        out[i] = std::exp(lo + u * (hi - lo));
    }
    out.back() = t_max; // pin the endpoint against rounding
    return out;
}

} // namespace labsr
