#include "ahrf/ricci_flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>

#include "ahrf/errors.hpp"

namespace ahrf {

namespace {

double max_of(std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }
double min_of(std::span<const double> v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace

FlowState derive_fields(const AxisymMetric& metric, double t) {
    const std::size_t n = metric.grid().size();
    ScalarField R = scalar_curvature(metric);
    // Average curvature of this metric; exactly 2 at area 4 pi, but Runge-Kutta stages drift slightly.
    const double r = integrate(metric, R) / area(metric);
    ScalarField source(n);
    for (std::size_t k = 0; k < n; ++k) {
        source[k] = R[k] - r;
    }
    ScalarField f = solve_poisson(metric, source);
    const Hessian H = hessian(metric, f);
    ScalarField Mtt(n);
    ScalarField Mpp(n);
    ScalarField Msq(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double half = 0.5 * (r - R[k]);
        Mtt[k] = half * metric.A()[k] + H.theta_theta[k];
        Mpp[k] = half * metric.B()[k] + H.phi_phi[k];
        const double x = Mtt[k] / metric.A()[k];
        const double y = Mpp[k] / metric.B()[k];
        Msq[k] = x * x + y * y;
    }
    return FlowState{t, metric, std::move(R), std::move(f), std::move(Mtt), std::move(Mpp), std::move(Msq)};
}

void FlowControls::validate() const {
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) {
        throw ConfigurationError("cfl_safety must lie in (0, 1]");
    }
    if (!(t_end > 1.0) || !std::isfinite(t_end)) {
        throw ConfigurationError("flow t_end must exceed 1");
    }
    if (!(store_dt > 0.0 && store_dt <= 1.0)) {
        throw ConfigurationError("store_dt must lie in (0, 1]");
    }
    if (!(settle_msq >= 0.0 && settle_msq < 1e-8)) {
        throw ConfigurationError("settle_msq must lie in [0, 1e-8)");
    }
}

double stable_step(const AxisymMetric& metric) {
    const BandedMatrix L = laplacian_matrix(metric);
    const std::size_t n = L.size();
    double radius = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = (i > 5 ? i - 5 : 0); j <= std::min(n - 1, i + 5); ++j) {
            row += std::abs(L.at(i, j));
        }
        radius = std::max(radius, row);
    }
    // RK4 covers [-2.78, 0] on the real axis; the Hessian term doubles the stiffness
    // of the metric components relative to the scalar Laplacian.
    return 2.78 / (2.0 * radius);
}

namespace {

AxisymMetric advance_metric(const AxisymMetric& base, std::span<const double> dA, std::span<const double> dB,
                            double scale) {
    const std::size_t n = base.grid().size();
    ScalarField A(n);
    ScalarField B(n);
    for (std::size_t k = 0; k < n; ++k) {
        A[k] = base.A()[k] + scale * dA[k];
        B[k] = base.B()[k] + scale * dB[k];
        if (!(A[k] > 0.0) || !(B[k] > 0.0) || !std::isfinite(A[k]) || !std::isfinite(B[k])) {
            throw FlowBreakdownError("flow lost positivity at theta = " +
                                     std::to_string(base.grid().theta()[k]));
        }
    }
    return AxisymMetric(base.grid(), std::move(A), std::move(B));
}

}  // namespace

FlowState step(const FlowState& state, double dt, double cfl_safety) {
    if (!(dt > 0.0)) {
        throw FlowBreakdownError("step rejected: dt must be positive");
    }
    const double limit = cfl_safety * stable_step(state.metric);
    // The limit drifts slowly as the metric evolves, so allow a small margin.
    if (dt > limit * 1.05) {
        throw FlowBreakdownError("step rejected: dt = " + std::to_string(dt) + " exceeds stability limit " +
                                 std::to_string(limit));
    }
    const std::size_t n = state.metric.grid().size();
    auto rate = [n](const FlowState& s, ScalarField& dA, ScalarField& dB) {
        dA.resize(n);
        dB.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            dA[k] = 2.0 * s.M_tt[k];
            dB[k] = 2.0 * s.M_pp[k];
        }
    };
    ScalarField k1A, k1B, k2A, k2B, k3A, k3B, k4A, k4B;
    rate(state, k1A, k1B);
    const FlowState s2 = derive_fields(advance_metric(state.metric, k1A, k1B, 0.5 * dt), state.t + 0.5 * dt);
    rate(s2, k2A, k2B);
    const FlowState s3 = derive_fields(advance_metric(state.metric, k2A, k2B, 0.5 * dt), state.t + 0.5 * dt);
    rate(s3, k3A, k3B);
    const FlowState s4 = derive_fields(advance_metric(state.metric, k3A, k3B, dt), state.t + dt);
    rate(s4, k4A, k4B);
    ScalarField dA(n);
    ScalarField dB(n);
    for (std::size_t k = 0; k < n; ++k) {
        dA[k] = (k1A[k] + 2.0 * k2A[k] + 2.0 * k3A[k] + k4A[k]) / 6.0;
        dB[k] = (k1B[k] + 2.0 * k2B[k] + 2.0 * k3B[k] + k4B[k]) / 6.0;
    }
    return derive_fields(normalize_area(advance_metric(state.metric, dA, dB, dt)), state.t + dt);
}

FlowDiagnostics diagnose(const FlowState& state) {
    double max_dev = 0.0;
    for (double r : state.R) {
        max_dev = std::max(max_dev, std::abs(r - kMeanCurvatureR));
    }
    return FlowDiagnostics{state.t, area(state.metric), max_dev, max_of(state.Msq), min_of(state.metric.A()),
                           min_of(state.metric.B())};
}

FlowTrajectory::FlowTrajectory(std::vector<FlowState> states, double t_end, std::optional<double> settled_at)
    : states_(std::move(states)), t_end_(t_end), settled_at_(settled_at) {
    if (states_.empty()) {
        throw DomainError("flow trajectory needs at least one state");
    }
    for (std::size_t i = 1; i < states_.size(); ++i) {
        if (!(states_[i].t > states_[i - 1].t)) {
            throw DomainError("flow trajectory times must increase strictly");
        }
    }
    diagnostics_.reserve(states_.size());
    for (const auto& s : states_) {
        diagnostics_.push_back(diagnose(s));
    }
}

AxisymMetric FlowTrajectory::metric_at(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    if (t < t_begin() - tol || t > t_end_ + tol) {
        throw DomainError("flow queried at t = " + std::to_string(t) + " outside [" +
                          std::to_string(t_begin()) + ", " + std::to_string(t_end_) + "]");
    }
    if (t >= states_.back().t) {
        return states_.back().metric;
    }
    if (t <= states_.front().t) {
        return states_.front().metric;
    }
    const auto it = std::upper_bound(states_.begin(), states_.end(), t,
                                     [](double v, const FlowState& s) { return v < s.t; });
    const FlowState& s1 = *it;
    const FlowState& s0 = *(it - 1);
    const double h = s1.t - s0.t;
    const double x = (t - s0.t) / h;
    // Cubic Hermite basis with dA/dt = 2 M_tt, dB/dt = 2 M_pp.
    const double h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
    const double h10 = x * (1.0 - x) * (1.0 - x);
    const double h01 = x * x * (3.0 - 2.0 * x);
    const double h11 = x * x * (x - 1.0);
    const std::size_t n = grid().size();
    ScalarField A(n);
    ScalarField B(n);
    for (std::size_t k = 0; k < n; ++k) {
        A[k] = h00 * s0.metric.A()[k] + h10 * h * 2.0 * s0.M_tt[k] + h01 * s1.metric.A()[k] +
               h11 * h * 2.0 * s1.M_tt[k];
        B[k] = h00 * s0.metric.B()[k] + h10 * h * 2.0 * s0.M_pp[k] + h01 * s1.metric.B()[k] +
               h11 * h * 2.0 * s1.M_pp[k];
    }
    return AxisymMetric(grid(), std::move(A), std::move(B));
}

FlowState FlowTrajectory::at(double t) const {
    if (t >= states_.back().t) {
        (void)metric_at(t);  // range check
        FlowState s = states_.back();
        s.t = t;
        return s;
    }
    const auto it = std::lower_bound(states_.begin(), states_.end(), t,
                                     [](const FlowState& s, double v) { return s.t < v; });
    if (it != states_.end() && it->t == t) {
        return *it;
    }
    return derive_fields(metric_at(t), t);
}

void FlowTrajectory::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw ConfigurationError("cannot write " + path);
    }
    out << "t,area,max_abs_R_minus_2,max_msq,min_A,min_B\n";
    out << std::setprecision(17);
    for (const auto& d : diagnostics_) {
        out << d.t << ',' << d.area << ',' << d.max_abs_R_minus_2 << ',' << d.max_msq << ',' << d.min_A << ','
            << d.min_B << '\n';
    }
}

FlowTrajectory evolve(const AxisymMetric& initial, const FlowControls& controls) {
    controls.validate();
    std::vector<FlowState> states;
    states.push_back(derive_fields(initial, 1.0));
    std::optional<double> settled;
    if (max_of(states.back().Msq) <= controls.settle_msq) {
        settled = 1.0;
    }
    while (!settled && states.back().t < controls.t_end) {
        const FlowState& last = states.back();
        const double interval = std::min(controls.store_dt, controls.t_end - last.t);
        const double limit = controls.cfl_safety * stable_step(last.metric);
        const auto substeps = static_cast<std::size_t>(std::ceil(interval / limit));
        const double dt = interval / static_cast<double>(substeps);
        FlowState s = last;
        for (std::size_t i = 0; i < substeps; ++i) {
            s = step(s, dt, controls.cfl_safety);
        }
        if (controls.t_end - s.t < 1e-12) {
            s.t = controls.t_end;
        }
        states.push_back(std::move(s));
        if (max_of(states.back().Msq) <= controls.settle_msq) {
            settled = states.back().t;
        }
    }
    const double reach = settled ? std::numeric_limits<double>::infinity() : states.back().t;
    return FlowTrajectory(std::move(states), reach, settled);
}

RateFit convergence_rate(const FlowTrajectory& trajectory) {
    const auto& diag = trajectory.diagnostics();
    RateFit fit;
    if (diag.back().max_msq >= 1e-3) {
        throw DiagnosticError("flow has not decayed: final max |M|^2 = " + std::to_string(diag.back().max_msq));
    }
    constexpr double floor = 1e-20;
    if (std::all_of(diag.begin(), diag.end(), [](const FlowDiagnostics& d) { return d.max_msq <= floor; })) {
        fit.degenerate = true;
        fit.note = "already constant curvature";
        return fit;
    }
    std::vector<double> ts;
    std::vector<double> ys;
    for (const auto& d : diag) {
        if (d.t >= 2.0 && d.max_msq > floor) {
            ts.push_back(d.t);
            ys.push_back(std::log(d.max_msq));
        }
    }
    if (ts.size() < 5) {
        throw DiagnosticError("insufficient decay window for a rate fit");
    }
    const auto m = static_cast<double>(ts.size());
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        st += ts[i];
        sy += ys[i];
        stt += ts[i] * ts[i];
        sty += ts[i] * ys[i];
    }
    const double slope = (m * sty - st * sy) / (m * stt - st * st);
    const double intercept = (sy - slope * st) / m;
    double ss = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double r = ys[i] - (intercept + slope * ts[i]);
        ss += r * r;
    }
    const double span = max_of(ys) - min_of(ys);
    fit.rate = slope;
    fit.samples = ts.size();
    fit.fit_residual = span > 0.0 ? std::sqrt(ss / m) / span : 0.0;
    fit.note = "fit over t in [" + std::to_string(ts.front()) + ", " + std::to_string(ts.back()) + "]";
    return fit;
}

}  // namespace ahrf
