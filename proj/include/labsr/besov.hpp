#pragma once

#include <cstddef>
#include <vector>

namespace labsr {

// A function sampled on the uniform grid x_i = i / (size - 1), i = 0..size-1,
// spanning [0, 1] with both endpoints included.
struct GridFunction {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double step() const { return 1.0 / static_cast<double>(values.size() - 1); }

    // Throws std::invalid_argument unless the grid has at least two points.
    void validate() const;
};

// r-th forward finite difference with step h:
//   D_h^r f(x) = sum_{k=0}^r C(r,k) (-1)^(r-k) f(x + k h)
// evaluated on [0, 1 - r h] and set to zero beyond it. h must be a positive
// integer multiple of the grid step (within 1e-9 relative) with r h <= 1;
// violations throw std::invalid_argument.
GridFunction finite_difference(const GridFunction& g, int r, double h);

// r-th modulus of smoothness at scale t:
//   w_{r,p}(f, t) = sup over grid-aligned h in (0, t] of |D_h^r f|_p
// where |.|_p is the discrete L^p norm taken with left-endpoint Riemann
// weights over the support [0, 1 - r h] (maximum over the support for
// p = infinity, which callers pass as std::numeric_limits<double>::infinity()).
// Scales t below the grid step have no admissible h and yield 0.
double modulus_of_smoothness(const GridFunction& g, int r, double p, double t);

// Besov seminorm estimate for smoothness s, integrability p, and summability
// q, using r = floor(s) + 1 and the supplied scales (ascending, positive;
// conventionally log-spaced in (4/size, 1]):
//   q = infinity : max over t of t^(-s) w_{r,p}(f, t)
//   q < infinity : ( integral of [t^(-s) w_{r,p}(f, t)]^q dt/t )^(1/q)
// with the integral taken by trapezoid quadrature in log t over the scale
// range. Everything is a grid discretization: treat the value as an estimate
// whose reliability is assessed by refinement over grid sizes, never as the
// exact seminorm.
double besov_seminorm_estimate(const GridFunction& g, double s, double p, double q,
                               const std::vector<double>& t_grid);

// count scales geometrically spaced from t_min up to t_max inclusive.
std::vector<double> log_spaced_t_grid(double t_min, double t_max, std::size_t count);

} // namespace labsr
