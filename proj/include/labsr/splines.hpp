#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace labsr {

/// Largest spline degree the kernel accepts.  Evaluation uses fixed-size
/// scratch buffers sized for this bound.
inline constexpr int kMaxDegree = 10;

/** Knot sequence for a single variable-degree spline atom.
 *
 *  A degree-k atom is supported by exactly k+2 knots, so the basis function it
 *  induces has one "free-knot" shape parameter per knot and integrates over a
 *  single hump.  Knots must be nondecreasing; coincident knots are legal for
 *  evaluation (they produce degenerate, possibly zero, bumps) but the model
 *  layer keeps them separated by its minimum-spacing constraint.
 */
struct KnotVector {
    int degree = 0;
    std::vector<double> knots; // size degree + 2, nondecreasing

    /// Throws std::invalid_argument if the degree/knot-count/ordering
    /// invariant is broken.
    void validate() const;
};

/** One additive component: a scaled B-spline bump. */
struct SplineAtom {
    KnotVector kv;
    double coefficient = 0.0;
};

/** Evaluates the normalized B-spline basis function defined by `kv` at x.
 *
 *  Degree 0 is the half-open indicator 1[k0 <= x < k1]; higher degrees follow
 *  the two-term recursion on the leading/trailing sub-sequences with the
 *  convention that any 0/0 term is dropped.  Values lie in [0, 1] and vanish
 *  outside [first knot, last knot).
 */
double bspline_eval(double x, const KnotVector& kv);

/** Sum of coefficient-weighted atom evaluations at x (empty sum is 0). */
double function_eval(std::span<const SplineAtom> atoms, double x);

/** n-by-J matrix of atom basis values at the given points, one column per
 *  atom in sequence order.  Throws std::invalid_argument when `atoms` is
 *  empty: a design matrix with no basis has no meaningful shape.
 */
Eigen::MatrixXd design_matrix(std::span<const double> xs, std::span<const SplineAtom> atoms);

/** Minimum gap between consecutive order statistics of `points`.
 *  The input need not be sorted.  Throws std::invalid_argument for fewer than
 *  two points.
 */
double min_spacing(std::span<const double> points);

/** Upper bound on the sup-norm change of a spline mixture per unit sup-norm
 *  perturbation of its knots.
 *
 *  Arguments: `coeff_bound` bounds every |coefficient|, `total_atoms` counts
 *  atoms across all degrees, `delta` is the minimum knot spacing both knot
 *  configurations satisfy, `max_degree` is the largest degree in play,
 *  `degree_count` the number of distinct degrees, and `domain_ext` the
 *  half-width A by which the knot domain [-A, 1+A] extends past [0, 1].
 *
 *  Valid only when delta <= 2(1+2A)/max_degree (throws otherwise, as the
 *  bound's derivation needs that headroom); also throws on non-positive
 *  delta/coeff_bound or empty configurations.
 */
double lipschitz_bound(double coeff_bound, int total_atoms, double delta,
                       int max_degree, int degree_count, double domain_ext);

} // namespace labsr
