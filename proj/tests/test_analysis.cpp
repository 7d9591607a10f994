#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ahrf/analysis.hpp"
#include "ahrf/errors.hpp"
#include "ahrf/exact_solutions.hpp"

using namespace ahrf;

namespace {

constexpr double pi = std::numbers::pi;

FlowTrajectory round_flow(std::size_t n, double t_end) {
    FlowControls c;
    c.t_end = t_end;
    return evolve(round_metric(build_grid(n)), c);
}

// Lapse trajectory built directly from the closed form.
ExtensionTrajectory exact_trajectory(const SphereGrid& g, double m, const std::vector<double>& times) {
    std::vector<ExtensionState> states;
    for (double t : times) {
        const double u = exact_lapse(m, t);
        states.push_back(make_state(g, t, ScalarField(g.size(), 1.0 / (u * u))));
    }
    ExtensionControls c;
    c.t_end = times.back();
    return ExtensionTrajectory(std::move(states), c, std::nullopt, times.size());
}

std::vector<double> geometric_times(double t0, double t1, std::size_t count) {
    std::vector<double> t(count);
    for (std::size_t i = 0; i < count; ++i) {
        t[i] = t0 * std::pow(t1 / t0, static_cast<double>(i) / (count - 1));
    }
    return t;
}

// Closed-form running integral -int_1^t (2 + 6s^2 - a s^{-3})/4 ds for the round sphere.
double round_tail_integral(double a, double t) {
    auto F = [a](double s) { return 2 * s + 2 * s * s * s + a / (2 * s * s); };
    return -(F(t) - F(1.0)) / 4.0;
}

}  // namespace

TEST_CASE("existence constant on the round sphere") {
    const FlowTrajectory flow = round_flow(32, 100.0);
    const KResult k0 = compute_K(flow, RbarProfile::constant(), 100.0);
    CHECK(std::abs(k0.K) < 1e-12);
    CHECK(k0.attained_at == 1.0);
    CHECK_FALSE(k0.certificate.empty());

    // a = 20: S changes sign once, at the root of 2 + 6t^2 = 20 t^{-3}.
    double lo = 1.0;
    double hi = 2.0;
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (2 + 6 * mid * mid - 20 / (mid * mid * mid) < 0 ? lo : hi) = mid;
    }
    const KResult k20 = compute_K(flow, RbarProfile::tail(20.0), 100.0);
    CHECK(k20.K == doctest::Approx(round_tail_integral(20.0, lo)).epsilon(1e-10));
    CHECK(k20.attained_at == doctest::Approx(lo).epsilon(1e-8));
    CHECK(compute_K(flow, RbarProfile::tail(1.0), 100.0).K == 0.0);
}

TEST_CASE("existence constant grows with the tail amplitude") {
    const FlowTrajectory flow = round_flow(32, 50.0);
    double prev = -1.0;
    for (double a : {8.0, 12.0, 20.0, 40.0}) {
        const double K = compute_K(flow, RbarProfile::tail(a), 50.0).K;
        CHECK(K >= prev);
        prev = K;
    }
}

TEST_CASE("existence constant refuses an unsettled flow") {
    FlowControls c;
    c.t_end = 2.0;
    const FlowTrajectory flow = evolve(perturbed_metric(build_grid(32), 0.2, 2), c);
    CHECK_THROWS_AS(compute_K(flow, RbarProfile::constant(), 2.0), DiagnosticError);
}

TEST_CASE("bound envelope on the round sphere") {
    const FlowTrajectory flow = round_flow(32, 60.0);
    const std::vector<double> times = geometric_times(1.0, 60.0, 40);
    const BoundEnvelope env = delta_bounds(flow, RbarProfile::constant(), times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        const double delta = 1.0 - 2.0 / (t * (1 + t * t));
        CHECK(env.delta_lower[i] == doctest::Approx(delta).epsilon(1e-12));
        CHECK(env.delta_upper[i] == doctest::Approx(delta).epsilon(1e-12));
        CHECK(env.J_upper[i] == 0.0);
        // Both bounds reproduce the closed form for constant phi.
        for (double m : {0.1, 0.5, 0.9}) {
            const double phi = 2 * std::sqrt(2.0) / mean_curvature_for_mass(m);
            const double w = 1.0 / std::pow(exact_lapse(m, t), 2);
            CHECK(lower_bound(env, i, phi) == doctest::Approx(w).epsilon(1e-12));
            CHECK(upper_bound(env, i, phi) == doctest::Approx(w).epsilon(1e-12));
        }
    }
}

TEST_CASE("sandwich check flags violations") {
    const FlowTrajectory flow = round_flow(16, 5.0);
    const SphereGrid& g = flow.grid();
    const std::vector<double> times = {1.0, 2.0, 5.0};
    const ExtensionTrajectory exact = exact_trajectory(g, 0.5, times);
    const BoundEnvelope env = delta_bounds(flow, RbarProfile::constant(), times);
    const ScalarField phi(16, std::sqrt(2.0));
    const SandwichReport ok = check_sandwich(exact, env, phi, g, 1e-9);
    CHECK(ok.lower_violations + ok.upper_violations == 0);
    CHECK(ok.checked == 48);

    std::vector<ExtensionState> shifted = exact.states();
    shifted[1] = make_state(g, 2.0, ScalarField(16, shifted[1].w[0] + 1e-3));
    ExtensionControls c;
    c.t_end = 5.0;
    const ExtensionTrajectory bad(shifted, c, std::nullopt, 3);
    const SandwichReport r = check_sandwich(bad, env, phi, g, 1e-9);
    CHECK(r.upper_violations == 16);
    CHECK(r.worst_t == 2.0);
    CHECK(r.max_violation == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("Hawking mass of the closed form") {
    const FlowTrajectory flow = round_flow(32, 100.0);
    for (double m : {0.0, 0.1, 0.5, 0.9}) {
        const ExtensionTrajectory ext = exact_trajectory(flow.grid(), m, geometric_times(1.0, 100.0, 12));
        for (const auto& s : ext.states()) {
            const FlowState fs = flow.at(s.t);
            CAPTURE(s.t);
            CHECK(hawking_mass_def(s, fs) == doctest::Approx(m).epsilon(1e-9).scale(1.0));
            CHECK(hawking_mass_formula(s, fs) == doctest::Approx(m).epsilon(1e-9).scale(1.0));
            const MassDerivative d = mass_derivative_integrand(s, fs, RbarProfile::constant());
            CHECK(std::abs(d.total) < 1e-12);
        }
    }
}

TEST_CASE("mass derivative matches finite differences in t") {
    // Perturbed flow with a tail: differentiate the mass along the computed lapse
    // with a fourth-order stencil and compare with the integrand.
    const SphereGrid g = build_grid(64);
    FlowControls fc;
    fc.t_end = 8.0;
    const FlowTrajectory flow = evolve(perturbed_metric(g, 0.1, 2), fc);
    const RbarProfile Rbar = RbarProfile::tail(2.0);
    ExtensionControls c;
    c.t_end = 8.0;
    c.dt_factor = 1e-3;
    const double t0 = 2.0;
    const double h = 0.01;
    c.output_times = {t0 - 2 * h, t0 - h, t0, t0 + h, t0 + 2 * h};
    const auto ext = integrate_extension(flow, ScalarField(64, 2.5), Rbar, c);
    auto mass = [&](double t) { return hawking_mass_formula(ext.state_at(t), flow.at(t)); };
    const double fd = (mass(t0 - 2 * h) - 8 * mass(t0 - h) + 8 * mass(t0 + h) - mass(t0 + 2 * h)) / (12 * h);
    const MassDerivative d = mass_derivative_integrand(ext.state_at(t0), flow.at(t0), Rbar);
    CHECK(d.curvature_term > 0.0);
    CHECK(d.gradient_term > 0.0);
    CHECK(d.shear_term > 0.0);
    CHECK(d.total == doctest::Approx(d.curvature_term + d.gradient_term + d.shear_term));
    CHECK(fd == doctest::Approx(d.total).epsilon(1e-3));
}

TEST_CASE("finite differences are exact on quadratics") {
    const std::vector<double> x = {0.0, 0.3, 1.0, 1.1, 2.5, 4.0};
    std::vector<double> y;
    for (double v : x) {
        y.push_back(3 * v * v - v + 2);
    }
    const auto d = finite_difference(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(d[i] == doctest::Approx(6 * x[i] - 1).epsilon(1e-12));
    }
}

TEST_CASE("mass limit extrapolation") {
    MassSeries s;
    for (double t : geometric_times(1.0, 100.0, 200)) {
        s.times.push_back(t);
    }
    s.times.push_back(25.0);
    s.times.push_back(50.0);
    std::sort(s.times.begin(), s.times.end());
    for (double t : s.times) {
        s.mass_formula.push_back(0.7 - 0.3 / (t * t));
    }
    const MassLimit l = mass_limit_estimate(s);
    CHECK(l.value == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(l.exponent == doctest::Approx(2.0).epsilon(1e-9));

    for (double& m : s.mass_formula) {
        m = 0.25;
    }
    const MassLimit flat = mass_limit_estimate(s);
    CHECK(flat.value == 0.25);
    CHECK(flat.note.find("flat") != std::string::npos);

    for (std::size_t i = 0; i < s.times.size(); ++i) {
        s.mass_formula[i] = std::log(s.times[i]);
    }
    CHECK_THROWS_AS(mass_limit_estimate(s), DiagnosticError);

    MassSeries shortrun;
    shortrun.times = {1.0, 10.0};
    shortrun.mass_formula = {0.0, 0.1};
    CHECK_THROWS_AS(mass_limit_estimate(shortrun), DiagnosticError);
}

TEST_CASE("decay fit and asymptotics on the closed form") {
    const FlowTrajectory flow = round_flow(16, 100.0);
    const ExtensionTrajectory ext = exact_trajectory(flow.grid(), 0.5, geometric_times(1.0, 100.0, 80));
    // u - 1 = m t^{-3} + O(t^{-5})
    const DecayFit fit = decay_fit(ext, 10.0, 50.0);
    CHECK(fit.slope == doctest::Approx(-3.0).epsilon(0.01));
    CHECK(fit.C == doctest::Approx(0.5).epsilon(0.05));
    const AHReport ah = ah_asymptotics_check(ext, flow);
    CHECK(ah.bounded);
    // t^5 (u^2/(1+t^2) - 1/t^2 + 1/t^4) -> 2m.
    CHECK(ah.sup_scaled == doctest::Approx(1.0).epsilon(0.1));

    const ExtensionTrajectory flat = exact_trajectory(flow.grid(), 0.0, geometric_times(1.0, 100.0, 20));
    CHECK(decay_fit(flat).degenerate);
    const ExtensionTrajectory shortrun = exact_trajectory(flow.grid(), 0.5, geometric_times(1.0, 20.0, 20));
    CHECK_THROWS_AS(decay_fit(shortrun), DiagnosticError);
    CHECK_THROWS_AS(ah_asymptotics_check(shortrun, flow), DiagnosticError);
}

TEST_CASE("asymptotics check detects a slower falloff") {
    // u^2 = 1 + c/t^2 leaves a t^{-4} term in gbar_tt, so the scaled residual grows like t.
    const FlowTrajectory flow = round_flow(16, 100.0);
    std::vector<ExtensionState> states;
    for (double t : geometric_times(1.0, 100.0, 60)) {
        states.push_back(make_state(flow.grid(), t, ScalarField(16, 1.0 / (1.0 + 0.5 / (t * t)))));
    }
    ExtensionControls c;
    c.t_end = 100.0;
    const ExtensionTrajectory ext(std::move(states), c, std::nullopt, 60);
    const AHReport ah = ah_asymptotics_check(ext, flow);
    CHECK_FALSE(ah.bounded);
    CHECK(ah.growth_slope == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rigidity diagnostics") {
    MassSeries s;
    s.times = {1.0, 100.0};
    s.mass_formula = {0.5, 0.5};
    s.max_rbar_excess = {0.0, 0.0};
    s.max_msq = {0.0, 0.0};
    s.max_grad_u = {0.0, 0.0};
    MassLimit l;
    l.value = 0.5;
    RigidityReport r = rigidity_diagnostics(s, l);
    CHECK(r.rigid);
    CHECK(r.consistent);

    s.max_msq = {0.1, 0.0};
    l.value = 0.6;
    r = rigidity_diagnostics(s, l);
    CHECK_FALSE(r.rigid);
    CHECK(r.consistent);

    l.value = 0.5;
    r = rigidity_diagnostics(s, l);
    CHECK(r.rigid);
    CHECK_FALSE(r.consistent);
}

TEST_CASE("master CSV") {
    const FlowTrajectory flow = round_flow(16, 5.0);
    const std::vector<double> times = {1.0, 2.0, 5.0};
    const ExtensionTrajectory ext = exact_trajectory(flow.grid(), 0.5, times);
    const BoundEnvelope env = delta_bounds(flow, RbarProfile::constant(), times);
    const MassSeries ms = mass_series(ext, flow, RbarProfile::constant());
    const auto path = (std::filesystem::temp_directory_path() / "ahrf_master_test.csv").string();
    write_master_csv(path, ext, env, ms, ScalarField(16, std::sqrt(2.0)));
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line ==
          "t,min_u,max_u,delta_lower,delta_upper,lower_bound,upper_bound,mass_def,mass_formula,dmass_dt,max_msq,"
          "max_rbar_excess");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    CHECK(rows == 3);
    std::filesystem::remove(path);
}
