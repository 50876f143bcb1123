#include "labsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "labsr/densities.hpp"

namespace labsr {

// ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
// Hyperparameters
// ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

std::vector<std::string> HyperParams::validate() const {
    if (degrees.empty())
        throw std::invalid_argument("hyperparams: degree set must not be empty");
    std::set<int> seen;
    for (int k : degrees) {
        if (k < 0 || k > kMaxDegree)
            throw std::invalid_argument("hyperparams: degree " + std::to_string(k) +
                                        " outside [0, " + std::to_string(kMaxDegree) + "]");
        if (!seen.insert(k).second)
            throw std::invalid_argument("hyperparams: duplicate degree " + std::to_string(k));
    }
    for (const auto& [k, ak] : a)
        if (ak <= 0.0)
            throw std::invalid_argument("hyperparams: Gamma shape for degree " +
                                        std::to_string(k) + " must be positive");
    if (C_b < 0.0 || C_phi <= 0.0 || C_delta <= 0.0)
        throw std::invalid_argument("hyperparams: schedule constants must be positive "
                                    "(C_b may be zero)");
    if (r <= 0.0 || R <= 0.0)
        throw std::invalid_argument("hyperparams: noise-variance prior needs r > 0 and R > 0");
    if (A < 0.0) throw std::invalid_argument("hyperparams: domain extension A must be >= 0");
    if (n < 0) throw std::invalid_argument("hyperparams: schedule sample size must be >= 0");

    std::vector<std::string> warnings;
    if (seen.count(0))
        warnings.push_back("degree 0 is supported by the kernel but sits outside the "
                           "smoothness theory; expect piecewise-constant artifacts");
    return warnings;
}

HyperParams HyperParams::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"degrees", "a",       "C_b", "C_phi", "phi_mode",
                                             "C_delta", "r",       "R",   "A",     "n"};
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            throw std::invalid_argument("hyperparams: unknown key '" + item.key() + "'");

    HyperParams hp;
    if (j.contains("degrees")) hp.degrees = j.at("degrees").get<std::vector<int>>();
    if (j.contains("a")) {
        const auto& ja = j.at("a");
        if (ja.is_number()) {
            for (int k : hp.degrees) hp.a[k] = ja.get<double>();
        } else if (ja.is_object()) {
            for (const auto& item : ja.items()) hp.a[std::stoi(item.key())] = item.value().get<double>();
        } else {
            throw std::invalid_argument("hyperparams: 'a' must be a number or an object keyed "
                                        "by degree");
        }
    }
    if (j.contains("C_b")) hp.C_b = j.at("C_b").get<double>();
    if (j.contains("C_phi")) hp.C_phi = j.at("C_phi").get<double>();
    if (j.contains("phi_mode")) {
        const std::string mode = j.at("phi_mode").get<std::string>();
        if (mode == "table")
            hp.phi_mode = PhiMode::Table;
        else if (mode == "theory")
            hp.phi_mode = PhiMode::Theory;
        else
            throw std::invalid_argument("hyperparams: phi_mode must be 'table' or 'theory', got '" +
                                        mode + "'");
    }
    if (j.contains("C_delta")) hp.C_delta = j.at("C_delta").get<double>();
    if (j.contains("r")) hp.r = j.at("r").get<double>();
    if (j.contains("R")) hp.R = j.at("R").get<double>();
    if (j.contains("A")) hp.A = j.at("A").get<double>();
    if (j.contains("n")) hp.n = j.at("n").get<long>();
    hp.validate();
    return hp;
}

nlohmann::json HyperParams::to_json() const {
    nlohmann::json ja = nlohmann::json::object();
    for (const auto& [k, v] : a) ja[std::to_string(k)] = v;
    return nlohmann::json{{"degrees", degrees},
                          {"a", ja},
                          {"C_b", C_b},
                          {"C_phi", C_phi},
                          {"phi_mode", phi_mode == PhiMode::Table ? "table" : "theory"},
                          {"C_delta", C_delta},
                          {"r", r},
                          {"R", R},
                          {"A", A},
                          {"n", n}};
}

Schedule schedule(long n, const HyperParams& hp) {
    if (n < 2)
        throw std::invalid_argument("schedule: sample size must be >= 2, got " + std::to_string(n));
    const double L = std::log(static_cast<double>(n));
    Schedule s;
    s.b_n = std::exp(hp.C_b * L * L);
    s.delta_n = std::exp(-hp.C_delta * L * L);
    s.phi_n = hp.phi_mode == PhiMode::Table ? hp.C_phi * L : std::exp(hp.C_phi * L * L);
    return s;
}

// ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
// State, likelihood, prior
// ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

std::vector<SplineAtom> all_atoms(const LabsState& state) {
    std::vector<SplineAtom> flat;
    flat.reserve(static_cast<std::size_t>(state.total_atoms()));
    for (const auto& [k, atoms] : state.atoms_by_degree)
        flat.insert(flat.end(), atoms.begin(), atoms.end());
    return flat;
}

double log_likelihood(const LabsState& state, const Dataset& data) {
    if (!(state.sigma2 > 0.0))
        throw std::invalid_argument("log_likelihood: noise variance must be positive");
    const auto atoms = all_atoms(state);
    const double inv2s = 0.5 / state.sigma2;
    const double norm = -0.5 * std::log(2.0 * std::numbers::pi * state.sigma2);
    double ll = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double res = data.ys[i] - function_eval(atoms, data.xs[i]);
        ll += norm - res * res * inv2s;
    }
    return ll;
}

std::optional<std::string> support_violation(const LabsState& state, const HyperParams& hp,
                                             const Schedule& sch) {
    if (!(state.sigma2 > 0.0)) return "non-positive noise variance";
    const std::set<int> allowed(hp.degrees.begin(), hp.degrees.end());
    for (int k : hp.degrees) {
        auto it = state.poisson_mean.find(k);
        if (it == state.poisson_mean.end())
            return "missing atom-count mean for degree " + std::to_string(k);
        if (!(it->second > 0.0))
            return "non-positive atom-count mean for degree " + std::to_string(k);
    }
    const double lo = -hp.A, hi = 1.0 + hp.A;
    for (const auto& [k, atoms] : state.atoms_by_degree) {
        if (!allowed.count(k))
            return "atoms of degree " + std::to_string(k) + " outside the model's degree set";
        for (const auto& atom : atoms) {
            if (atom.kv.degree != k) return "atom stored under mismatched degree key";
            if (static_cast<int>(atom.kv.knots.size()) != k + 2)
                return "atom of degree " + std::to_string(k) + " with wrong knot count";
            if (!std::is_sorted(atom.kv.knots.begin(), atom.kv.knots.end()))
                return "unordered knot sequence";
            if (atom.kv.knots.front() < lo || atom.kv.knots.back() > hi)
                return "knot outside the domain [-A, 1+A]";
            if (min_spacing(atom.kv.knots) < sch.delta_n)
                return "knot spacing below the schedule minimum";
        }
    }
    return std::nullopt;
}

double log_prior(const LabsState& state, const HyperParams& hp, const Schedule& sch) {
    if (support_violation(state, hp, sch)) return kNegInf;
    double lp = log_inv_gamma_pdf(state.sigma2, hp.r / 2.0, hp.r * hp.R / 2.0);
    for (int k : hp.degrees) {
        const double M = state.poisson_mean.at(k);
        lp += log_gamma_pdf(M, hp.a_for(k), sch.b_n);
        auto it = state.atoms_by_degree.find(k);
        const long J = it == state.atoms_by_degree.end() ? 0
                                                         : static_cast<long>(it->second.size());
        lp += log_poisson_pmf(J, M);
        if (it != state.atoms_by_degree.end())
            for (const auto& atom : it->second)
                lp += log_normal_pdf(atom.coefficient, 0.0, sch.phi_n);
        // Knot placements are uniform over their admissible region; that
        // density is constant in the state and cancels from every ratio the
        // sampler forms, so it is deliberately left out here.
    }
    return lp;
}

// ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
// Knot placement
// ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

double constrained_knot_log_volume(int degree, double delta, double domain_ext) {
    if (degree < 0 || degree > kMaxDegree)
        throw std::invalid_argument("constrained_knot_log_volume: bad degree");
    if (delta <= 0.0 || domain_ext < 0.0)
        throw std::invalid_argument("constrained_knot_log_volume: need delta > 0, A >= 0");
    const int m = degree + 2;
    const double width = 1.0 + 2.0 * domain_ext;
    const double slack = width - (m - 1) * delta;
    if (slack <= 0.0)
        throw std::invalid_argument("constrained_knot_log_volume: spacing delta infeasible for " +
                                    std::to_string(m) + " knots on width " + std::to_string(width));
    // Shifting the i-th order statistic left by (i-1)*delta maps the
    // constrained region bijectively onto an unconstrained box of side
    // `slack`, so the volume is slack^m.
    return m * std::log(slack);
}

KnotVector sample_knots(int degree, double delta, double domain_ext, std::mt19937_64& rng) {
    constrained_knot_log_volume(degree, delta, domain_ext); // validates feasibility
    const int m = degree + 2;
    std::uniform_real_distribution<double> u(-domain_ext, 1.0 + domain_ext);
    constexpr long kMaxAttempts = 1000000;
    std::vector<double> ks(static_cast<std::size_t>(m));
    for (long attempt = 0; attempt < kMaxAttempts; ++attempt) {
        for (auto& v : ks) v = u(rng);
        std::sort(ks.begin(), ks.end());
        bool ok = true;
        for (int i = 1; i < m && ok; ++i) ok = ks[i] - ks[i - 1] >= delta;
        if (ok) return KnotVector{degree, ks};
    }
    throw std::runtime_error("sample_knots: rejection sampling exhausted its attempt budget; "
                             "the admissible region is too thin");
}

double clip(double F, double x) {
    if (!(F > 0.0)) throw std::invalid_argument("clip: threshold F must be positive");
    return std::clamp(x, -F, F);
}

double hellinger_profile(std::span<const double> f1, double sigma1,
                         std::span<const double> f2, double sigma2) {
    if (f1.size() != f2.size())
        throw std::invalid_argument("hellinger_profile: profiles differ in length");
    if (f1.empty()) throw std::invalid_argument("hellinger_profile: empty profiles");
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
        throw std::invalid_argument("hellinger_profile: sds must be positive");
    const double s11 = sigma1 * sigma1, s22 = sigma2 * sigma2;
    const double ssum = s11 + s22;
    const double coef = std::sqrt(2.0 * sigma1 * sigma2 / ssum);
    double acc = 0.0;
    for (std::size_t i = 0; i < f1.size(); ++i) {
        const double d = f1[i] - f2[i];
        const double h2 = 1.0 - coef * std::exp(-d * d / (4.0 * ssum));
        acc += std::clamp(h2, 0.0, 1.0);
    }
    return std::sqrt(acc / static_cast<double>(f1.size()));
}

} // namespace labsr
