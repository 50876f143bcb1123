#include "labsr/splines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace labsr {

void KnotVector::validate() const {
    if (degree < 0 || degree > kMaxDegree)
        throw std::invalid_argument("spline degree must lie in [0, " +
                                    std::to_string(kMaxDegree) + "], got " + std::to_string(degree));
    if (static_cast<int>(knots.size()) != degree + 2)
        throw std::invalid_argument("degree-" + std::to_string(degree) + " atom needs " +
                                    std::to_string(degree + 2) + " knots, got " +
                                    std::to_string(knots.size()));
    if (!std::is_sorted(knots.begin(), knots.end()))
        throw std::invalid_argument("knot sequence must be nondecreasing");
}

double bspline_eval(double x, const KnotVector& kv) {
    kv.validate();
    const auto& t = kv.knots;
    const int k = kv.degree;
    // Support is the half-open span [t.front(), t.back()).
    if (!(x >= t.front()) || x >= t.back()) return 0.0;

    // Triangular recursion over the k+1 consecutive knot pairs.  level[i]
    // holds the value of the degree-l basis on knots t[i..i+l+1].
    double level[kMaxDegree + 1];
    for (int i = 0; i <= k; ++i) level[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
    for (int l = 1; l <= k; ++l) {
        for (int i = 0; i + l <= k; ++i) {
            double left = 0.0, right = 0.0;
            const double dl = t[i + l] - t[i];
            const double dr = t[i + l + 1] - t[i + 1];
            if (dl > 0.0) left = (x - t[i]) / dl * level[i];
            if (dr > 0.0) right = (t[i + l + 1] - x) / dr * level[i + 1];
            level[i] = left + right;
        }
    }
    return level[0];
}

double function_eval(std::span<const SplineAtom> atoms, double x) {
    double s = 0.0;
    for (const auto& a : atoms) s += a.coefficient * bspline_eval(x, a.kv);
    return s;
}

Eigen::MatrixXd design_matrix(std::span<const double> xs, std::span<const SplineAtom> atoms) {
    if (atoms.empty())
        throw std::invalid_argument("design_matrix: no atoms, so there is no basis to evaluate");
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(atoms.size()));
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
        const auto& a = atoms[static_cast<std::size_t>(j)];
        a.kv.validate();
        for (Eigen::Index i = 0; i < phi.rows(); ++i)
            phi(i, j) = bspline_eval(xs[static_cast<std::size_t>(i)], a.kv);
    }
    return phi;
}

double min_spacing(std::span<const double> points) {
    if (points.size() < 2)
        throw std::invalid_argument("min_spacing needs at least two points");
    std::vector<double> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
    return gap;
}

double lipschitz_bound(double coeff_bound, int total_atoms, double delta,
                       int max_degree, int degree_count, double domain_ext) {
    if (coeff_bound <= 0.0 || delta <= 0.0)
        throw std::invalid_argument("lipschitz_bound: coeff_bound and delta must be positive");
    if (total_atoms < 1 || degree_count < 1)
        throw std::invalid_argument("lipschitz_bound: needs at least one atom and one degree");
    if (max_degree < 1 || max_degree > kMaxDegree)
        throw std::invalid_argument("lipschitz_bound: max_degree must lie in [1, " +
                                    std::to_string(kMaxDegree) + "]");
    if (domain_ext < 0.0)
        throw std::invalid_argument("lipschitz_bound: domain extension must be nonnegative");
    const double width = 1.0 + 2.0 * domain_ext;
    if (delta > 2.0 * width / max_degree)
        throw std::invalid_argument("lipschitz_bound: spacing delta exceeds 2(1+2A)/max_degree, "
                                    "outside the bound's region of validity");
    const double d = std::min(delta, 1.0);
    return 4.0 * degree_count * std::pow(width, max_degree) * (max_degree + 2) *
           coeff_bound * total_atoms * std::pow(d, -(max_degree + 1));
}

} // namespace labsr
