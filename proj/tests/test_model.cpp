#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "labsr/densities.hpp"
#include "labsr/model.hpp"
#include "labsr/rng.hpp"

using namespace labsr;
using Catch::Approx;

namespace {

// One-sample Kolmogorov-Smirnov against a cdf; returns the statistic.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    }
    return d;
}

LabsState make_state(std::mt19937_64& rng, const HyperParams& hp, const Schedule& sch,
                     int atoms_per_degree) {
    LabsState st;
    std::normal_distribution<double> coef(0.0, 2.0);
    std::gamma_distribution<double> gam(1.5, 1.0);
    for (int k : hp.degrees) {
        st.poisson_mean[k] = gam(rng) + 0.1;
        auto& vec = st.atoms_by_degree[k];
        for (int j = 0; j < atoms_per_degree; ++j)
            vec.push_back({sample_knots(k, sch.delta_n, hp.A, rng), coef(rng)});
    }
    st.sigma2 = 0.5 + gam(rng);
    return st;
}

} // namespace

TEST_CASE("schedules reproduce the calibrated reference values", "[model]") {
    HyperParams hp; // defaults: C_b = 1e-4, C_phi = 1.5 (log-linear), C_delta = 1
    struct Row {
        long n;
        double b, phi, delta;
    };
    // Six-significant-digit reference triples for n = 128, 1024, 8192.
    const Row rows[] = {{128, 1.002357, 7.278045, 5.966965e-11},
                        {1024, 1.004816, 10.397208, 1.362043e-21},
                        {8192, 1.008153, 13.516370, 5.454844e-36}};
    for (const auto& row : rows) {
        const Schedule s = schedule(row.n, hp);
        CHECK(s.b_n == Approx(row.b).epsilon(1e-6));
        CHECK(s.phi_n == Approx(row.phi).epsilon(1e-6));
        CHECK(s.delta_n == Approx(row.delta).epsilon(1e-6));
    }
    // Spot formula identity at one more size.
    const double L = std::log(300.0);
    const Schedule s = schedule(300, hp);
    CHECK(s.delta_n == Approx(std::exp(-L * L)).epsilon(1e-14));
    CHECK(s.b_n == Approx(std::exp(1e-4 * L * L)).epsilon(1e-14));
}

TEST_CASE("schedule modes and preconditions", "[model]") {
    HyperParams hp;
    hp.phi_mode = PhiMode::Theory;
    const double L = std::log(128.0);
    CHECK(schedule(128, hp).phi_n == Approx(std::exp(1.5 * L * L)).epsilon(1e-12));

    // All three schedules are monotone in n.
    HyperParams table;
    Schedule prev = schedule(2, table);
    for (long n : {4L, 16L, 256L, 4096L, 65536L}) {
        const Schedule cur = schedule(n, table);
        CHECK(cur.b_n > prev.b_n);
        CHECK(cur.phi_n > prev.phi_n);
        CHECK(cur.delta_n < prev.delta_n);
        prev = cur;
    }

    CHECK_THROWS_AS(schedule(1, table), std::invalid_argument);
    CHECK_THROWS_AS(schedule(0, table), std::invalid_argument);
    CHECK_THROWS_AS(schedule(-5, table), std::invalid_argument);
}

TEST_CASE("log_likelihood equals the pointwise Gaussian sum", "[model]") {
    std::mt19937_64 rng(2024);
    HyperParams hp;
    hp.A = 0.1;
    const Schedule sch = schedule(256, hp);

    for (int rep = 0; rep < 20; ++rep) {
        const LabsState st = make_state(rng, hp, sch, 2);
        Dataset data;
        std::uniform_real_distribution<double> ux(0.0, 1.0);
        std::normal_distribution<double> uy(0.0, 1.5);
        for (int i = 0; i < 30; ++i) {
            data.xs.push_back(ux(rng));
            data.ys.push_back(uy(rng));
        }
        const auto atoms = all_atoms(st);
        double expected = 0.0;
        for (int i = 0; i < 30; ++i) {
            const double mu = function_eval(atoms, data.xs[i]);
            const double z = (data.ys[i] - mu);
            expected += -0.5 * std::log(2.0 * std::numbers::pi * st.sigma2) -
                        z * z / (2.0 * st.sigma2);
        }
        CHECK(log_likelihood(st, data) == Approx(expected).margin(1e-10));
    }

    LabsState bad;
    bad.sigma2 = 0.0;
    CHECK_THROWS_AS(log_likelihood(bad, Dataset{}), std::invalid_argument);
    LabsState ok;
    CHECK(log_likelihood(ok, Dataset{}) == 0.0); // empty product
}

TEST_CASE("log_prior matches a term-by-term construction", "[model]") {
    std::mt19937_64 rng(515);
    HyperParams hp;
    hp.degrees = {1, 3};
    hp.a = {{1, 1.0}, {3, 2.5}};
    hp.r = 4.0;
    hp.R = 2.0;
    hp.A = 0.05;
    const Schedule sch = schedule(512, hp);

    for (int rep = 0; rep < 20; ++rep) {
        const LabsState st = make_state(rng, hp, sch, 1 + rep % 3);
        double expected = 0.0;
        {
            const double shape = hp.r / 2.0, scl = hp.r * hp.R / 2.0;
            expected += shape * std::log(scl) - std::lgamma(shape) -
                        (shape + 1.0) * std::log(st.sigma2) - scl / st.sigma2;
        }
        for (int k : hp.degrees) {
            const double M = st.poisson_mean.at(k);
            const double a = hp.a_for(k);
            expected += a * std::log(sch.b_n) - std::lgamma(a) + (a - 1.0) * std::log(M) -
                        sch.b_n * M;
            const auto& atoms = st.atoms_by_degree.at(k);
            const double J = static_cast<double>(atoms.size());
            expected += J * std::log(M) - M - std::lgamma(J + 1.0);
            for (const auto& atom : atoms)
                expected += -0.5 * std::log(2.0 * std::numbers::pi * sch.phi_n * sch.phi_n) -
                            atom.coefficient * atom.coefficient / (2.0 * sch.phi_n * sch.phi_n);
        }
        CHECK(log_prior(st, hp, sch) == Approx(expected).margin(1e-9));
    }
}

TEST_CASE("prior support violations are reported and score -infinity", "[model]") {
    std::mt19937_64 rng(99);
    HyperParams hp;
    hp.degrees = {1, 2};
    const Schedule sch = schedule(128, hp);
    const LabsState good = make_state(rng, hp, sch, 1);
    REQUIRE(!support_violation(good, hp, sch));
    REQUIRE(std::isfinite(log_prior(good, hp, sch)));

    auto expect_violation = [&](LabsState st) {
        CHECK(support_violation(st, hp, sch).has_value());
        CHECK(log_prior(st, hp, sch) == kNegInf);
    };

    {
        LabsState st = good;
        st.sigma2 = -1.0;
        expect_violation(st);
    }
    {
        LabsState st = good;
        st.poisson_mean.erase(2);
        expect_violation(st);
    }
    {
        LabsState st = good;
        st.poisson_mean[1] = 0.0;
        expect_violation(st);
    }
    {
        // Degree outside the configured set.
        LabsState st = good;
        st.atoms_by_degree[3].push_back({sample_knots(3, sch.delta_n, hp.A, rng), 1.0});
        expect_violation(st);
    }
    {
        // Knot leaves the domain.
        LabsState st = good;
        st.atoms_by_degree[1][0].kv.knots.back() = 1.0 + hp.A + 0.5;
        expect_violation(st);
    }
    {
        // Two knots closer than the schedule minimum.
        LabsState st = good;
        auto& ks = st.atoms_by_degree[1][0].kv.knots;
        ks[1] = ks[0] + sch.delta_n / 4.0;
        std::sort(ks.begin(), ks.end());
        expect_violation(st);
    }
    {
        // Atom filed under the wrong degree key.
        LabsState st = good;
        st.atoms_by_degree[1][0].kv = KnotVector{2, {0.1, 0.3, 0.5, 0.7}};
        expect_violation(st);
    }
}

TEST_CASE("constrained knot volume matches rejection acceptance rate", "[model]") {
    // Degree 0, two knots on [0,1] with gap >= 0.25: volume (1 - 0.25)^2.
    CHECK(std::exp(constrained_knot_log_volume(0, 0.25, 0.0)) == Approx(0.5625).epsilon(1e-12));
    // Infeasible spacing throws.
    CHECK_THROWS_AS(constrained_knot_log_volume(1, 0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(constrained_knot_log_volume(0, -0.1, 0.0), std::invalid_argument);

    // Monte Carlo cross-check: acceptance probability of iid box draws equals
    // volume / width^m.
    const int degree = 1;
    const double delta = 0.1, A = 0.0;
    const double p_expected = std::exp(constrained_knot_log_volume(degree, delta, A)) / 1.0;
    std::mt19937_64 rng(7777);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int trials = 200000;
    int hits = 0;
    std::vector<double> ks(3);
    for (int t = 0; t < trials; ++t) {
        for (auto& v : ks) v = u(rng);
        std::sort(ks.begin(), ks.end());
        if (ks[1] - ks[0] >= delta && ks[2] - ks[1] >= delta) ++hits;
    }
    const double p_hat = static_cast<double>(hits) / trials;
    const double se = std::sqrt(p_expected * (1.0 - p_expected) / trials);
    CHECK(std::abs(p_hat - p_expected) < 4.0 * se);
}

TEST_CASE("sample_knots draws uniformly from the constrained region", "[model]") {
    const int degree = 1; // three knots
    const double delta = 0.1, A = 0.2;
    const double W = 1.0 + 2.0 * A;
    const double slack = W - 2.0 * delta;
    std::mt19937_64 rng(31415);

    const int N = 4000;
    std::vector<double> u1, u2, u3;
    for (int i = 0; i < N; ++i) {
        const KnotVector kv = sample_knots(degree, delta, A, rng);
        REQUIRE(kv.knots.size() == 3);
        REQUIRE(std::is_sorted(kv.knots.begin(), kv.knots.end()));
        REQUIRE(kv.knots.front() >= -A);
        REQUIRE(kv.knots.back() <= 1.0 + A);
        REQUIRE(min_spacing(kv.knots) >= delta);
        // Gap-shift bijection onto plain sorted uniforms on [0, slack]:
        // subtracting (i-1)*delta from the i-th order statistic removes the
        // spacing constraint exactly.
        u1.push_back((kv.knots[0] + A) / slack);
        u2.push_back((kv.knots[1] + A - delta) / slack);
        u3.push_back((kv.knots[2] + A - 2.0 * delta) / slack);
    }
    // Order statistics of three uniforms: Beta(1,3), Beta(2,2), Beta(3,1).
    const double crit = 1.63 / std::sqrt(static_cast<double>(N)); // alpha = 0.01
    CHECK(ks_statistic(u1, [](double u) { return 1.0 - std::pow(1.0 - u, 3); }) < crit);
    CHECK(ks_statistic(u2, [](double u) { return u * u * (3.0 - 2.0 * u); }) < crit);
    CHECK(ks_statistic(u3, [](double u) { return u * u * u; }) < crit);

    CHECK_THROWS_AS(sample_knots(1, 0.5, 0.0, rng), std::invalid_argument);
}

TEST_CASE("clip clamps symmetrically", "[model]") {
    CHECK(clip(2.0, 3.5) == 2.0);
    CHECK(clip(2.0, -3.5) == -2.0);
    CHECK(clip(2.0, 1.25) == 1.25);
    CHECK(clip(2.0, -2.0) == -2.0);
    CHECK_THROWS_AS(clip(0.0, 1.0), std::invalid_argument);
}

TEST_CASE("hellinger_profile agrees with numeric integration", "[model]") {
    // Quadrature oracle for the squared Hellinger distance of two normals:
    // 1 - integral of sqrt(p q) via Simpson's rule on a wide bracket.
    auto h2_quadrature = [](double m1, double s1, double m2, double s2) {
        const double lo = std::min(m1, m2) - 12.0 * std::max(s1, s2);
        const double hi = std::max(m1, m2) + 12.0 * std::max(s1, s2);
        const int segments = 40000;
        const double h = (hi - lo) / segments;
        auto g = [&](double x) {
            const double lp = log_normal_pdf(x, m1, s1) + log_normal_pdf(x, m2, s2);
            return std::exp(0.5 * lp);
        };
        double acc = g(lo) + g(hi);
        for (int i = 1; i < segments; ++i) acc += g(lo + i * h) * (i % 2 ? 4.0 : 2.0);
        return 1.0 - acc * h / 3.0;
    };

    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> um(-3.0, 3.0);
    std::uniform_real_distribution<double> us(0.3, 2.5);
    for (int rep = 0; rep < 25; ++rep) {
        const double m1 = um(rng), m2 = um(rng), s1 = us(rng), s2 = us(rng);
        const std::vector<double> f1{m1}, f2{m2};
        const double d = hellinger_profile(f1, s1, f2, s2);
        CHECK(d * d == Approx(h2_quadrature(m1, s1, m2, s2)).margin(1e-8));
    }

    // Equal-mean closed form: sigma 1 vs 2 gives 1 - sqrt(4/5).
    const std::vector<double> z{0.0, 0.0, 0.0};
    const double d = hellinger_profile(z, 1.0, z, 2.0);
    CHECK(d * d == Approx(1.0 - std::sqrt(0.8)).epsilon(1e-12));

    // Symmetry, identity, bounds.
    const std::vector<double> p1{0.2, -1.0, 3.0}, p2{0.1, 0.5, -2.0};
    CHECK(hellinger_profile(p1, 0.7, p2, 1.3) == Approx(hellinger_profile(p2, 1.3, p1, 0.7)));
    CHECK(hellinger_profile(p1, 0.9, p1, 0.9) == 0.0);
    CHECK(hellinger_profile(p1, 0.7, p2, 1.3) <= 1.0);

    CHECK_THROWS_AS(hellinger_profile(p1, 1.0, std::vector<double>{0.0}, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(hellinger_profile(std::vector<double>{}, 1.0, std::vector<double>{}, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(hellinger_profile(p1, 0.0, p2, 1.0), std::invalid_argument);
}

TEST_CASE("hyperparameter JSON round trip and validation", "[model]") {
    // Defaults survive an empty object.
    const HyperParams d = HyperParams::from_json(nlohmann::json::object());
    CHECK(d.degrees == std::vector<int>{1, 2});
    CHECK(d.C_b == Approx(1e-4));
    CHECK(d.C_phi == Approx(1.5));
    CHECK(d.phi_mode == PhiMode::Table);
    CHECK(d.C_delta == Approx(1.0));
    CHECK(d.r == Approx(0.01));
    CHECK(d.R == Approx(1.0));
    CHECK(d.A == Approx(0.0));
    CHECK(d.a_for(2) == 1.0);

    // Scalar `a` broadcasts over the degree set; object form is per degree.
    const auto hs = HyperParams::from_json({{"degrees", {0, 2}}, {"a", 2.5}});
    CHECK(hs.a_for(0) == 2.5);
    CHECK(hs.a_for(2) == 2.5);
    const auto ho = HyperParams::from_json({{"degrees", {1, 2}}, {"a", {{"1", 3.0}}}});
    CHECK(ho.a_for(1) == 3.0);
    CHECK(ho.a_for(2) == 1.0); // fallback

    // Round trip through JSON preserves every field.
    HyperParams hp;
    hp.degrees = {2, 3};
    hp.a = {{2, 1.5}, {3, 0.5}};
    hp.phi_mode = PhiMode::Theory;
    hp.C_phi = 0.01;
    hp.n = 777;
    const HyperParams back = HyperParams::from_json(hp.to_json());
    CHECK(back.degrees == hp.degrees);
    CHECK(back.a == hp.a);
    CHECK(back.phi_mode == PhiMode::Theory);
    CHECK(back.C_phi == Approx(hp.C_phi));
    CHECK(back.n == 777);

    CHECK_THROWS_AS(HyperParams::from_json({{"phi_mode", "exponential"}}), std::invalid_argument);
    CHECK_THROWS_AS(HyperParams::from_json({{"degres", {1}}}), std::invalid_argument);
    CHECK_THROWS_AS(HyperParams::from_json({{"degrees", {1, 1}}}), std::invalid_argument);
    CHECK_THROWS_AS(HyperParams::from_json({{"degrees", nlohmann::json::array()}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(HyperParams::from_json({{"r", -1.0}}), std::invalid_argument);

    // Degree 0 is legal but warned about.
    HyperParams hz;
    hz.degrees = {0, 1};
    CHECK(!hz.validate().empty());
    HyperParams hq;
    CHECK(hq.validate().empty());
}
