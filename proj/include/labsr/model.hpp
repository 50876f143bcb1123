#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "labsr/dataset.hpp"
#include "labsr/splines.hpp"

namespace labsr {

/// How the coefficient prior sd grows with sample size: the calibrated
/// log-linear profile used throughout, or the faster exponential profile the
/// asymptotic analysis allows.
enum class PhiMode { Table, Theory };

/** Model hyperparameters and the constants of the sample-size schedules.
 *
 *  Degree set, per-degree Gamma shape a_k, schedule constants, noise-variance
 *  prior (r, R), and the domain half-extension A (knots live on [-A, 1+A]).
 *  `n` pins the schedule sample size; 0 means "use the dataset size".
 */
struct HyperParams {
    std::vector<int> degrees{1, 2};
    std::map<int, double> a; // per-degree Gamma shape; missing degrees fall back to 1
    double C_b = 1e-4;
    double C_phi = 1.5;
    PhiMode phi_mode = PhiMode::Table;
    double C_delta = 1.0;
    double r = 0.01;
    double R = 1.0;
    double A = 0.0;
    long n = 0;

    double a_for(int degree) const {
        auto it = a.find(degree);
        return it == a.end() ? 1.0 : it->second;
    }

    /// Throws std::invalid_argument on structural problems (empty/duplicate
    /// degrees, non-positive constants).  Returns human-readable warnings for
    /// legal-but-questionable settings (degree 0 in play).
    std::vector<std::string> validate() const;

    static HyperParams from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/** Sample-size-dependent prior constants. */
struct Schedule {
    double b_n = 0.0;     // Gamma rate on the mean atom count
    double phi_n = 0.0;   // coefficient prior sd
    double delta_n = 0.0; // minimum knot spacing
};

/** Evaluates the three schedules at sample size n (requires n >= 2). */
Schedule schedule(long n, const HyperParams& hp);

/** Full model state: atoms grouped by degree, the per-degree mean atom
 *  counts, and the noise variance.  Both maps carry an entry for every degree
 *  in the hyperparameter set, even when no atoms of that degree are active.
 */
struct LabsState {
    std::map<int, std::vector<SplineAtom>> atoms_by_degree;
    std::map<int, double> poisson_mean; // M_k
    double sigma2 = 1.0;

    long total_atoms() const {
        long j = 0;
        for (const auto& [k, v] : atoms_by_degree) j += static_cast<long>(v.size());
        return j;
    }
};

/// All atoms across degrees, ascending by degree, preserving per-degree order
/// (the canonical flattening used for design matrices and joint updates).
std::vector<SplineAtom> all_atoms(const LabsState& state);

/** Gaussian log likelihood of the data under the state's mean function and
 *  noise variance.  Throws std::invalid_argument on non-positive variance.
 */
double log_likelihood(const LabsState& state, const Dataset& data);

/** Checks the state against the prior's support: degrees inside the
 *  hyperparameter set, positive variance and atom-count means, knots ordered
 *  inside [-A, 1+A] with minimum spacing delta_n.  Returns a description of
 *  the first violation, or nothing when the state is in support.
 */
std::optional<std::string> support_violation(const LabsState& state, const HyperParams& hp,
                                             const Schedule& sch);

/** Joint log prior density of (atoms, M, sigma2) up to the constant knot-
 *  placement normalizer, which cancels in every acceptance ratio.  States
 *  outside the support get -infinity (see support_violation for which
 *  constraint failed).
 */
double log_prior(const LabsState& state, const HyperParams& hp, const Schedule& sch);

/** Log volume of the unordered knot-placement region: degree+2 coordinates in
 *  a box of width 1+2A whose order statistics keep gaps >= delta.  Throws when
 *  the region is empty (spacing infeasible for that many knots).
 */
double constrained_knot_log_volume(int degree, double delta, double domain_ext);

/** Draws a uniformly distributed admissible knot vector for one degree-k atom
 *  by rejection from the box [-A, 1+A]^{k+2}.  Throws std::invalid_argument
 *  when the spacing constraint is infeasible, std::runtime_error if rejection
 *  fails to land after a very generous attempt budget.
 */
KnotVector sample_knots(int degree, double delta, double domain_ext, std::mt19937_64& rng);

/** Clamps x into [-F, F]. */
double clip(double F, double x);

/** Root-average-squared Hellinger distance between two Gaussian observation
 *  profiles evaluated at shared design points: sqrt of the mean over points of
 *  the squared Hellinger distance between N(f1_i, sigma1^2) and
 *  N(f2_i, sigma2^2).  Throws on length mismatch, empty input, or
 *  non-positive sds.
 */
double hellinger_profile(std::span<const double> f1, double sigma1,
                         std::span<const double> f2, double sigma2);

} // namespace labsr
