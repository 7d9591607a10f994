#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ahrf/analysis.hpp"
#include "ahrf/errors.hpp"
#include "ahrf/extension_solver.hpp"

using namespace ahrf;

namespace {

constexpr double sqrt8 = 2.0 * std::numbers::sqrt2;

FlowTrajectory round_flow(std::size_t n, double t_end) {
    FlowControls c;
    c.t_end = t_end;
    return evolve(round_metric(build_grid(n)), c);
}

// Spatially constant w on the round flow: t(1+t^2) w' = (2 - t^2 Rbar)/2 - w(1 + 3t^2).
// Classical RK4 in s = ln t with a fine fixed step; returns w at each requested time.
std::vector<double> scalar_oracle(double w0, double a, const std::vector<double>& times, bool* blew_up = nullptr) {
    auto f = [a](double t, double w) {
        const double rbar = -6.0 + a / std::pow(t, 5);
        return ((2.0 - t * t * rbar) / 2.0 - w * (1.0 + 3.0 * t * t)) / (t * (1.0 + t * t));
    };
    auto g = [&](double s, double w) {
        const double t = std::exp(s);
        return t * f(t, w);
    };
    std::vector<double> out;
    double s = 0.0;
    double w = w0;
    const double hs = 2e-5;
    for (double target : times) {
        const double st = std::log(target);
        while (s < st - 1e-15) {
            const double h = std::min(hs, st - s);
            const double k1 = g(s, w);
            const double k2 = g(s + h / 2, w + h / 2 * k1);
            const double k3 = g(s + h / 2, w + h / 2 * k2);
            const double k4 = g(s + h, w + h * k3);
            w += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            s += h;
            if (w <= 0.0) {
                if (blew_up) {
                    *blew_up = true;
                }
                return out;
            }
        }
        out.push_back(w);
    }
    if (blew_up) {
        *blew_up = false;
    }
    return out;
}

std::vector<double> H_for_w0(std::size_t n, double w0) {
    // w0 = phi^{-2} = H^2 / 8
    return std::vector<double>(n, std::sqrt(8.0 * w0));
}

}  // namespace

TEST_CASE("Rbar profiles") {
    const SphereGrid g = build_grid(16);
    CHECK(RbarProfile::constant()(3.0, 1.0) == -6.0);
    const RbarProfile tail = RbarProfile::tail(2.0);
    CHECK(tail(2.0, 0.3) == doctest::Approx(-6.0 + 2.0 / 32.0));
    CHECK(tail.max_excess(g, 1.0) == doctest::Approx(2.0));
    CHECK(tail.tail_bound() == 2.0);
    CHECK_THROWS_AS(RbarProfile::tail(-1.0), ConfigurationError);

    const RbarProfile tab = RbarProfile::table({1.0, 3.0}, {0.0, std::numbers::pi}, {{-5.0, -4.0}, {-7.0, -5.0}});
    REQUIRE(tab.warnings().size() == 1);
    CHECK(tab(1.0, 0.0) == -5.0);
    CHECK(tab(2.0, std::numbers::pi / 2) == doctest::Approx(0.5 * (-4.5) + 0.5 * (-5.5)));
    CHECK(tab(3.0, 0.0) == -6.0);  // clamped
    CHECK(tab(6.0, std::numbers::pi) == doctest::Approx(-6.0 + 1.0 / 32.0));
    CHECK(tab.tail_start() == 3.0);
    CHECK(tab.tail_bound() == doctest::Approx(243.0));
    for (double t : {1.0, 2.0, 10.0}) {
        for (double th : {0.0, 1.0, 3.0}) {
            CHECK(tab(t, th) >= -6.0);
        }
    }
    CHECK_THROWS_AS(RbarProfile::table({2.0, 1.0}, {0.0}, {{-6.0}, {-6.0}}), ConfigurationError);
    CHECK_THROWS_AS(RbarProfile::table({1.0}, {0.0, 1.0}, {{-6.0}}), ConfigurationError);
}

TEST_CASE("Rbar table files") {
    const auto dir = std::filesystem::temp_directory_path() / "ahrf_rbar_test";
    std::filesystem::create_directories(dir);
    const auto good = (dir / "good.csv").string();
    std::ofstream(good) << "t,0,3.14159\n1,-5,-5.5\n2,-6,-6\n";
    const RbarProfile p = RbarProfile::load_table(good);
    CHECK(p(1.0, 0.0) == -5.0);
    CHECK(p(1.5, 0.0) == doctest::Approx(-5.5));
    const auto bad = (dir / "bad.csv").string();
    std::ofstream(bad) << "t,0,1\n1,-5\n";
    CHECK_THROWS_AS(RbarProfile::load_table(bad), ConfigurationError);
    std::ofstream(bad) << "t,0\n1,abc\n";
    CHECK_THROWS_AS(RbarProfile::load_table(bad), ConfigurationError);
    CHECK_THROWS_AS(RbarProfile::load_table((dir / "missing.csv").string()), ConfigurationError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("initial lapse and admissibility") {
    const std::vector<double> H = {2.0, 4.0};
    const ScalarField phi = initial_lapse(H);
    CHECK(phi[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(phi[1] == doctest::Approx(std::sqrt(0.5)));
    CHECK_THROWS_AS(initial_lapse(std::vector<double>{1.0, 0.0}), DomainError);

    CHECK(check_global_condition(phi, 0.0).admissible);
    CHECK(check_global_condition(phi, -3.0).admissible);
    CHECK(std::isinf(check_global_condition(phi, 0.0).phi_threshold));
    const AdmissibilityReport r = check_global_condition(phi, 0.25);
    CHECK(r.admissible);  // sqrt(2) < 2
    CHECK(r.phi_threshold == doctest::Approx(2.0));
    CHECK(r.H_threshold == doctest::Approx(std::sqrt(2.0)));
    CHECK_FALSE(check_global_condition(phi, 0.5).admissible);
    CHECK_FALSE(check_global_condition(phi, 0.5 + 1e-12).admissible);  // phi = 1/sqrt(K) exactly is excluded
}

TEST_CASE("controls validation") {
    ExtensionControls c;
    CHECK_NOTHROW(c.validate());
    c.t_end = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
    c = ExtensionControls{};
    c.output_times = {0.5};
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
    c = ExtensionControls{};
    c.max_rel_change = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigurationError);
}

TEST_CASE("hyperbolic lapse is exactly stationary") {
    const FlowTrajectory flow = round_flow(32, 40.0);
    ExtensionControls c;
    c.t_end = 40.0;
    const ExtensionTrajectory ext = integrate_extension(flow, std::vector<double>(32, sqrt8), RbarProfile::constant(), c);
    REQUIRE(ext.completed());
    for (const auto& s : ext.states()) {
        for (double w : s.w) {
            CHECK(std::abs(w - 1.0) < 1e-14);
        }
    }
    CHECK(ext.states().back().t == 40.0);
}

TEST_CASE("spatially constant lapse follows the scalar ODE") {
    const double a = 3.0;
    const FlowTrajectory flow = round_flow(32, 30.0);
    ExtensionControls c;
    c.t_end = 30.0;
    c.output_times = {2.0, 5.0, 30.0};
    const double w0 = 0.7;
    const ExtensionTrajectory ext = integrate_extension(flow, H_for_w0(32, w0), RbarProfile::tail(a), c);
    REQUIRE(ext.completed());
    const std::vector<double> times = {2.0, 5.0, 30.0};
    const auto oracle = scalar_oracle(w0, a, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto& s = ext.state_at(times[i]);
        const auto [lo, hi] = std::minmax_element(s.w.begin(), s.w.end());
        CHECK(*hi - *lo < 1e-13);
        CHECK(std::abs(*lo - oracle[i]) < 1e-7);
    }
}

TEST_CASE("time stepping is second order") {
    const double a = 3.0;
    const FlowTrajectory flow = round_flow(32, 10.0);
    const std::vector<double> times = {10.0};
    const double exact = scalar_oracle(0.6, a, times)[0];
    std::vector<double> errors;
    for (double f : {1.6e-2, 8e-3, 4e-3}) {
        ExtensionControls c;
        c.t_end = 10.0;
        c.dt_factor = f;
        const ExtensionTrajectory ext = integrate_extension(flow, H_for_w0(32, 0.6), RbarProfile::tail(a), c);
        errors.push_back(std::abs(ext.states().back().w[0] - exact));
    }
    CAPTURE(errors[0]);
    CAPTURE(errors[2]);
    CHECK(std::log2(errors[0] / errors[1]) > 1.8);
    CHECK(std::log2(errors[1] / errors[2]) > 1.8);
}

TEST_CASE("blow-up happens exactly for inadmissible data") {
    // With a = 20, S(1) = -12 < 0 and K > 0; for constant data w0 the scalar ODE
    // reaches zero iff w0 < K.
    const double a = 20.0;
    const FlowTrajectory flow = round_flow(32, 20.0);
    const KResult K = compute_K(flow, RbarProfile::tail(a), 20.0);
    REQUIRE(K.K > 0.0);
    ExtensionControls c;
    c.t_end = 20.0;

    const auto low = H_for_w0(32, 0.9 * K.K);
    bool oracle_blew = false;
    scalar_oracle(0.9 * K.K, a, {20.0}, &oracle_blew);
    CHECK(oracle_blew);
    CHECK_FALSE(check_global_condition(initial_lapse(low), K.K).admissible);
    CHECK_THROWS_AS(solve_extension(flow, low, RbarProfile::tail(a), c, K.K), AdmissibilityError);
    const ExtensionTrajectory blown = integrate_extension(flow, low, RbarProfile::tail(a), c);
    REQUIRE(blown.blowup().has_value());
    CHECK(blown.blowup()->t < 2.0);
    c.admissibility_override = true;
    CHECK_THROWS_AS(solve_extension(flow, low, RbarProfile::tail(a), c, K.K), BlowUpError);

    c.admissibility_override = false;
    const auto high = H_for_w0(32, 1.1 * K.K);
    scalar_oracle(1.1 * K.K, a, {20.0}, &oracle_blew);
    CHECK_FALSE(oracle_blew);
    CHECK(solve_extension(flow, high, RbarProfile::tail(a), c, K.K).completed());
}

TEST_CASE("comparison principle on a perturbed flow") {
    const SphereGrid g = build_grid(32);
    FlowControls fc;
    fc.t_end = 6.0;
    const FlowTrajectory flow = evolve(perturbed_metric(g, 0.15, 2), fc);
    std::vector<double> H1(32);
    std::vector<double> H2(32);
    for (std::size_t k = 0; k < 32; ++k) {
        const double x = std::cos(g.theta()[k]);
        H1[k] = 2.0 + 0.3 * x;
        H2[k] = H1[k] + 0.05 * (1.0 + x * x);
    }
    ExtensionControls c;
    c.t_end = 6.0;
    const auto e1 = integrate_extension(flow, H1, RbarProfile::tail(1.0), c);
    const auto e2 = integrate_extension(flow, H2, RbarProfile::tail(1.0), c);
    REQUIRE(e1.states().size() == e2.states().size());
    for (std::size_t i = 0; i < e1.states().size(); ++i) {
        for (std::size_t k = 0; k < 32; ++k) {
            CHECK(e1.states()[i].w[k] <= e2.states()[i].w[k]);
        }
    }
}

TEST_CASE("step control") {
    const FlowTrajectory flow = round_flow(32, 5.0);
    const SphereGrid& g = flow.grid();
    const ExtensionState s = make_state(g, 1.0, ScalarField(32, 0.2));
    const ExtensionState full = advance(s, flow, RbarProfile::constant(), 1e-3, 0.5);
    CHECK(full.t == doctest::Approx(1.001));
    const ExtensionState halved = advance(s, flow, RbarProfile::constant(), 1e-3, 1e-4);
    CHECK(halved.t < 1.001);
    CHECK_THROWS_AS(make_state(g, 1.0, ScalarField(32, -1.0)), BlowUpError);
    // dw/dt matches the ODE right-hand side for constant data on the round sphere.
    const ScalarField r = rhs_w(s, flow.at(1.0), RbarProfile::constant());
    CHECK(r[7] == doctest::Approx((4.0 - 0.2 * 4.0) / 2.0));
}

TEST_CASE("snapshots and outputs") {
    const FlowTrajectory flow = round_flow(16, 3.0);
    ExtensionControls c;
    c.t_end = 3.0;
    c.output_times = {1.5};
    const auto ext = integrate_extension(flow, std::vector<double>(16, 2.0), RbarProfile::constant(), c);
    CHECK_NOTHROW(ext.state_at(1.5));
    CHECK_THROWS_AS(ext.state_at(1.55555), DomainError);
    const auto dir = std::filesystem::temp_directory_path() / "ahrf_ext_test";
    std::filesystem::create_directories(dir);
    ext.write_csv((dir / "lapse.csv").string());
    ext.write_snapshot((dir / "snap.txt").string(), 1.5, flow.grid());
    std::ifstream in(dir / "lapse.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,min_u,max_u,min_w,blowup");
    std::filesystem::remove_all(dir);
}

TEST_CASE("second fundamental form of the closed form") {
    // On the round flow with u = 1 (hyperbolic space) H = 2 sqrt(1+t^2)/t and
    // |h|^2 = H^2 / 2 (umbilic).
    const FlowTrajectory flow = round_flow(16, 3.0);
    const ExtensionState s = make_state(flow.grid(), 2.0, ScalarField(16, 1.0));
    const SecondFundamental sf = second_fundamental_diagnostics(s, flow.at(2.0));
    CHECK(sf.H[3] == doctest::Approx(std::sqrt(5.0)));
    CHECK(sf.hsq[3] == doctest::Approx(2.5));
}
