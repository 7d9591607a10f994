#include "ahrf/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "ahrf/errors.hpp"

namespace ahrf {

namespace {

constexpr double pi = std::numbers::pi;

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(6) << v;
    return out.str();
}

// Four-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 4> kGaussX = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                           0.8611363115940526};
constexpr std::array<double, 4> kGaussW = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                           0.3478548451374538};

// Extremes over the sphere of S = R - s^2 Rbar and of |M|^2 at time s.
struct Extremes {
    double s;
    double S_lo;
    double S_hi;
    double msq_hi;
    double msq_lo;
};

Extremes extremes_at(const FlowTrajectory& flow, const RbarProfile& Rbar, double s) {
    const FlowState fs = flow.at(s);
    const auto& grid = flow.grid();
    Extremes e{s, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double S = fs.R[k] - s * s * Rbar(s, grid.theta()[k]);
        e.S_lo = std::min(e.S_lo, S);
        e.S_hi = std::max(e.S_hi, S);
        e.msq_hi = std::max(e.msq_hi, fs.Msq[k]);
        e.msq_lo = std::min(e.msq_lo, fs.Msq[k]);
    }
    return e;
}

// Breakpoints for the time quadratures: the stored flow times while the flow
// still moves, a geometric grid afterwards, and the requested times.
std::vector<double> breakpoints(const FlowTrajectory& flow, double t_end, std::span<const double> extra) {
    std::vector<double> b;
    for (const auto& s : flow.states()) {
        if (s.t <= t_end) {
            b.push_back(s.t);
        }
    }
    double s = b.back();
    while (s < t_end) {
        s = std::min(t_end, s + std::min(0.02 * s, 0.25));
        b.push_back(s);
    }
    b.insert(b.end(), extra.begin(), extra.end());
    std::sort(b.begin(), b.end());
    std::vector<double> out;
    for (double v : b) {
        if (out.empty() || v - out.back() > 1e-12 * std::max(1.0, v)) {
            out.push_back(v);
        }
    }
    return out;
}

double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
    const double h = x1 - x0;
    const double r = (x - x0) / h;
    const double h00 = (1.0 + 2.0 * r) * (1.0 - r) * (1.0 - r);
    const double h10 = r * (1.0 - r) * (1.0 - r);
    const double h01 = r * r * (3.0 - 2.0 * r);
    const double h11 = r * r * (r - 1.0);
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
}

// Cumulative damping integrals J^*, J_* and the source integrals at the breakpoints.
struct TimeQuadrature {
    std::vector<double> s;
    std::vector<Extremes> ex;
    std::vector<double> J_hi;  // J^*
    std::vector<double> J_lo;  // J_*
    std::vector<double> Z_lo;  // int_1^s S_*/2 exp(J^*)
    std::vector<double> Z_hi;  // int_1^s S^*/2 exp(J_*)

    double J_hi_at(std::size_t i, double x) const {
        return hermite(s[i], s[i + 1], J_hi[i], J_hi[i + 1], s[i] * ex[i].msq_hi / 2.0,
                       s[i + 1] * ex[i + 1].msq_hi / 2.0, x);
    }
    double J_lo_at(std::size_t i, double x) const {
        return hermite(s[i], s[i + 1], J_lo[i], J_lo[i + 1], s[i] * ex[i].msq_lo / 2.0,
                       s[i + 1] * ex[i + 1].msq_lo / 2.0, x);
    }
};

TimeQuadrature build_quadrature(const FlowTrajectory& flow, const RbarProfile& Rbar, double t_end,
                                std::span<const double> extra) {
    TimeQuadrature q;
    q.s = breakpoints(flow, t_end, extra);
    const std::size_t m = q.s.size();
    q.ex.reserve(m);
    for (double s : q.s) {
        q.ex.push_back(extremes_at(flow, Rbar, s));
    }
    q.J_hi.assign(m, 0.0);
    q.J_lo.assign(m, 0.0);
    q.Z_lo.assign(m, 0.0);
    q.Z_hi.assign(m, 0.0);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double a = q.s[i];
        const double b = q.s[i + 1];
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        std::array<Extremes, 4> nodes;
        double dJ_hi = 0.0;
        double dJ_lo = 0.0;
        for (std::size_t g = 0; g < 4; ++g) {
            nodes[g] = extremes_at(flow, Rbar, mid + half * kGaussX[g]);
            dJ_hi += kGaussW[g] * nodes[g].s * nodes[g].msq_hi / 2.0;
            dJ_lo += kGaussW[g] * nodes[g].s * nodes[g].msq_lo / 2.0;
        }
        q.J_hi[i + 1] = q.J_hi[i] + half * dJ_hi;
        q.J_lo[i + 1] = q.J_lo[i] + half * dJ_lo;
        double dZ_lo = 0.0;
        double dZ_hi = 0.0;
        for (std::size_t g = 0; g < 4; ++g) {
            const double x = nodes[g].s;
            dZ_lo += kGaussW[g] * 0.5 * nodes[g].S_lo * std::exp(q.J_hi_at(i, x));
            dZ_hi += kGaussW[g] * 0.5 * nodes[g].S_hi * std::exp(q.J_lo_at(i, x));
        }
        q.Z_lo[i + 1] = q.Z_lo[i] + half * dZ_lo;
        q.Z_hi[i + 1] = q.Z_hi[i] + half * dZ_hi;
    }
    return q;
}

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const auto m = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return {slope, (sy - slope * sx) / m};
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

}  // namespace

KResult compute_K(const FlowTrajectory& flow, const RbarProfile& Rbar, double t_max) {
    if (!(t_max >= 1.0) || !std::isfinite(t_max)) {
        throw DiagnosticError("compute_K needs a finite t_max >= 1");
    }
    t_max = std::max(t_max, Rbar.tail_start());
    if (!flow.settled_at() || t_max > flow.t_end()) {
        throw DiagnosticError("flow has not settled; the tail of the K supremum cannot be certified");
    }
    // Curvature bound from t_max on: the flow is frozen after it settles.
    double R_lo = std::numeric_limits<double>::infinity();
    double msq_hi = 0.0;
    for (const auto& s : flow.states()) {
        if (s.t >= t_max || &s == &flow.states().back()) {
            R_lo = std::min(R_lo, *std::min_element(s.R.begin(), s.R.end()));
            msq_hi = std::max(msq_hi, *std::max_element(s.Msq.begin(), s.Msq.end()));
        }
    }
    {
        const FlowState at_max = flow.at(t_max);
        R_lo = std::min(R_lo, *std::min_element(at_max.R.begin(), at_max.R.end()));
        msq_hi = std::max(msq_hi, *std::max_element(at_max.Msq.begin(), at_max.Msq.end()));
    }
    if (!(msq_hi < 1e-8)) {
        throw DiagnosticError("max |M|^2 = " + fmt(msq_hi) + " beyond t_max is not below 1e-8");
    }
    // For s >= t_max: S_* >= R_lo + 6 s^2 - tail_bound s^{-3}, increasing in s.
    const double margin = R_lo + 6.0 * t_max * t_max - Rbar.tail_bound() / std::pow(t_max, 3);
    if (!(margin > 0.0)) {
        throw DiagnosticError("S_* is not certified positive beyond t_max = " + fmt(t_max));
    }

    const TimeQuadrature q = build_quadrature(flow, Rbar, t_max, {});
    KResult result;
    result.t_max = t_max;
    result.K = 0.0;
    result.attained_at = 1.0;
    for (std::size_t i = 0; i + 1 < q.s.size(); ++i) {
        const double I_right = -0.5 * q.Z_lo[i + 1];
        if (I_right > result.K) {
            result.K = I_right;
            result.attained_at = q.s[i + 1];
        }
        // Interior maximum where S_* turns from negative to positive.
        if (q.ex[i].S_lo < 0.0 && q.ex[i + 1].S_lo > 0.0) {
            double lo = q.s[i];
            double hi = q.s[i + 1];
            for (int iter = 0; iter < 100 && hi - lo > 1e-15 * hi; ++iter) {
                const double mid = 0.5 * (lo + hi);
                (extremes_at(flow, Rbar, mid).S_lo < 0.0 ? lo : hi) = mid;
            }
            const double root = 0.5 * (lo + hi);
            const double half = 0.5 * (root - q.s[i]);
            const double mid = 0.5 * (root + q.s[i]);
            double partial = 0.0;
            for (std::size_t g = 0; g < 4; ++g) {
                const double x = mid + half * kGaussX[g];
                partial += kGaussW[g] * 0.5 * extremes_at(flow, Rbar, x).S_lo * std::exp(q.J_hi_at(i, x));
            }
            const double I_root = -0.5 * (q.Z_lo[i] + half * partial);
            if (I_root > result.K) {
                result.K = I_root;
                result.attained_at = root;
            }
        }
    }
    result.certificate = "flow frozen with max |M|^2 = " + fmt(msq_hi) + " beyond t_max = " + fmt(t_max) +
                         "; S_* >= " + fmt(margin) + " > 0 there, so the running integral decreases";
    return result;
}

BoundEnvelope delta_bounds(const FlowTrajectory& flow, const RbarProfile& Rbar, std::span<const double> times) {
    BoundEnvelope env;
    if (times.empty()) {
        return env;
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 1.0) || (i > 0 && !(times[i] > times[i - 1]))) {
            throw DomainError("envelope times must be increasing and >= 1");
        }
    }
    const TimeQuadrature q = build_quadrature(flow, Rbar, times.back(), times);
    env.times.assign(times.begin(), times.end());
    std::size_t j = 0;
    for (double t : times) {
        while (j + 1 < q.s.size() && q.s[j] < t - 1e-12 * t) {
            ++j;
        }
        const double scale = 1.0 / (t * (1.0 + t * t));
        env.J_upper.push_back(q.J_hi[j]);
        env.J_lower.push_back(q.J_lo[j]);
        env.delta_lower.push_back(scale * std::exp(-q.J_hi[j]) * q.Z_lo[j]);
        env.delta_upper.push_back(scale * std::exp(-q.J_lo[j]) * q.Z_hi[j]);
    }
    return env;
}

double lower_bound(const BoundEnvelope& env, std::size_t i, double phi_max) {
    const double t = env.times[i];
    return env.delta_lower[i] + 2.0 / (t * (1.0 + t * t)) / (phi_max * phi_max) * std::exp(-env.J_upper[i]);
}

double upper_bound(const BoundEnvelope& env, std::size_t i, double phi_min) {
    const double t = env.times[i];
    return env.delta_upper[i] + 2.0 / (t * (1.0 + t * t)) / (phi_min * phi_min) * std::exp(-env.J_lower[i]);
}

SandwichReport check_sandwich(const ExtensionTrajectory& ext, const BoundEnvelope& env, std::span<const double> phi,
                              const SphereGrid& grid, double tolerance) {
    const auto& states = ext.states();
    if (env.times.size() != states.size()) {
        throw DomainError("envelope and lapse trajectory are not aligned");
    }
    const auto [phi_lo, phi_hi] = std::minmax_element(phi.begin(), phi.end());
    SandwichReport r;
    r.tolerance = tolerance;
    r.max_lower_gap = -std::numeric_limits<double>::infinity();
    r.max_upper_gap = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (std::abs(env.times[i] - states[i].t) > 1e-12 * states[i].t) {
            throw DomainError("envelope and lapse trajectory are not aligned");
        }
        const double lo = lower_bound(env, i, *phi_hi);
        const double hi = upper_bound(env, i, *phi_lo);
        for (std::size_t k = 0; k < states[i].w.size(); ++k) {
            const double w = states[i].w[k];
            ++r.checked;
            r.max_lower_gap = std::max(r.max_lower_gap, w - lo);
            r.max_upper_gap = std::max(r.max_upper_gap, hi - w);
            const double below = lo - w;
            const double above = w - hi;
            if (below > tolerance) {
                ++r.lower_violations;
            }
            if (above > tolerance) {
                ++r.upper_violations;
            }
            const double worst = std::max(below, above);
            if (worst > r.max_violation) {
                r.max_violation = worst;
                r.worst_t = states[i].t;
                r.worst_theta = grid.theta()[k];
            }
        }
    }
    return r;
}

double hawking_mass_def(const ExtensionState& state, const FlowState& flow) {
    // The bracket cancels to O(t^{-3}) of its terms, so everything is carried in
    // extended precision with H rebuilt from w.
    using real = long double;
    const auto& metric = flow.metric;
    const auto weights = metric.grid().weights();
    const real t = state.t;
    const real c = 2.0L * std::sqrt(1.0L + t * t) / t;
    real area_sum = 0.0L;
    real h2_sum = 0.0L;
    for (std::size_t k = 0; k < state.w.size(); ++k) {
        const real dmu = static_cast<real>(weights[k]) * metric.a()[k] * metric.b()[k];
        const real u = 1.0L / std::sqrt(static_cast<real>(state.w[k]));
        const real H = c / u;
        area_sum += dmu;
        h2_sum += H * H * dmu;
    }
    const real two_pi = 2.0L * std::numbers::pi_v<real>;
    const real four_pi = 2.0L * two_pi;
    const real surface_area = t * t * two_pi * area_sum;
    const real willmore = t * t * two_pi * h2_sum;
    const real m = std::sqrt(surface_area / (4.0L * four_pi)) *
                   (1.0L - willmore / (4.0L * four_pi) + surface_area / four_pi);
    return static_cast<double>(m);
}

double hawking_mass_formula(const ExtensionState& state, const FlowState& flow) {
    const double t = state.t;
    ScalarField density(state.w.size());
    for (std::size_t k = 0; k < density.size(); ++k) {
        density[k] = 0.5 * t * (1.0 + t * t) * (1.0 - state.w[k]);
    }
    return integrate(flow.metric, density) / (4.0 * pi);
}

MassDerivative mass_derivative_integrand(const ExtensionState& state, const FlowState& flow,
                                         const RbarProfile& Rbar) {
    const auto& grid = flow.metric.grid();
    const std::size_t n = grid.size();
    const double t = state.t;
    const ScalarField grad2 = gradient_dot(flow.metric, state.u, state.u);
    ScalarField curv(n), grad(n), shear(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u2 = state.u[k] * state.u[k];
        curv[k] = (Rbar(t, grid.theta()[k]) + 6.0) * t * t / 2.0;
        grad[k] = grad2[k] / u2;
        shear[k] = t * t * (1.0 + t * t) * flow.Msq[k] / (2.0 * u2);
    }
    MassDerivative d;
    d.curvature_term = integrate(flow.metric, curv) / (8.0 * pi);
    d.gradient_term = integrate(flow.metric, grad) / (8.0 * pi);
    d.shear_term = integrate(flow.metric, shear) / (8.0 * pi);
    d.total = d.curvature_term + d.gradient_term + d.shear_term;
    return d;
}

MassSeries mass_series(const ExtensionTrajectory& ext, const FlowTrajectory& flow, const RbarProfile& Rbar) {
    MassSeries m;
    const auto& grid = flow.grid();
    for (const auto& s : ext.states()) {
        const FlowState fs = flow.at(s.t);
        m.times.push_back(s.t);
        m.mass_def.push_back(hawking_mass_def(s, fs));
        m.mass_formula.push_back(hawking_mass_formula(s, fs));
        m.dmass.push_back(mass_derivative_integrand(s, fs, Rbar).total);
        m.max_msq.push_back(*std::max_element(fs.Msq.begin(), fs.Msq.end()));
        m.max_rbar_excess.push_back(Rbar.max_excess(grid, s.t));
        const ScalarField g2 = gradient_dot(fs.metric, s.u, s.u);
        m.max_grad_u.push_back(std::sqrt(std::max(0.0, *std::max_element(g2.begin(), g2.end()))));
    }
    return m;
}

std::vector<double> finite_difference(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n) {
        throw DomainError("finite_difference needs at least three aligned samples");
    }
    std::vector<double> d(n);
    auto three_point = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t at) {
        // Derivative of the quadratic through (x_a, x_b, x_c) evaluated at x_at.
        const double xa = x[a], xb = x[b], xc = x[c], z = x[at];
        return y[a] * ((z - xb) + (z - xc)) / ((xa - xb) * (xa - xc)) +
               y[b] * ((z - xa) + (z - xc)) / ((xb - xa) * (xb - xc)) +
               y[c] * ((z - xa) + (z - xb)) / ((xc - xa) * (xc - xb));
    };
    d[0] = three_point(0, 1, 2, 0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        d[i] = three_point(i - 1, i, i + 1, i);
    }
    d[n - 1] = three_point(n - 3, n - 2, n - 1, n - 1);
    return d;
}

MassLimit mass_limit_estimate(const MassSeries& series) {
    const auto& t = series.times;
    const auto& m = series.mass_formula;
    if (t.empty() || t.back() < 50.0) {
        throw DiagnosticError("mass limit needs a series reaching t >= 50");
    }
    const double T = t.back();
    bool interpolated = false;
    auto value_at = [&](double x) {
        const auto it = std::lower_bound(t.begin(), t.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - t.begin());
        if (it != t.end() && std::abs(*it - x) <= 1e-9 * x) {
            return m[i];
        }
        if (i > 0 && std::abs(t[i - 1] - x) <= 1e-9 * x) {
            return m[i - 1];
        }
        interpolated = true;
        const double r = (x - t[i - 1]) / (t[i] - t[i - 1]);
        return (1.0 - r) * m[i - 1] + r * m[i];
    };
    const double m1 = value_at(T / 4.0);
    const double m2 = value_at(T / 2.0);
    const double m3 = m.back();
    const double d1 = m2 - m1;
    const double d2 = m3 - m2;
    const double scale = std::max(1.0, std::abs(m3));
    MassLimit out;
    out.note = interpolated ? "samples interpolated between stored times; " : "";
    const double ratio = d2 != 0.0 ? d1 / d2 : 0.0;
    if (ratio > std::sqrt(2.0) && ratio < 256.0) {
        out.exponent = std::log2(ratio);
        out.residual = std::abs(d2 / (ratio - 1.0));
        out.value = m3 + d2 / (ratio - 1.0);
        out.note += "extrapolated from t = " + fmt(T / 4.0) + ", " + fmt(T / 2.0) + ", " + fmt(T);
        return out;
    }
    // Increments without a decaying pattern: accept only a tail that is flat to rounding.
    if (std::abs(d1) <= 1e-6 * scale && std::abs(d2) <= 1e-6 * scale) {
        out.value = m3;
        out.residual = std::max(std::abs(d1), std::abs(d2));
        out.note += "flat tail";
        return out;
    }
    throw DiagnosticError("mass series tail does not converge: increments " + fmt(d1) + ", " + fmt(d2));
}

DecayFit decay_fit(const ExtensionTrajectory& ext, double t_lo, double t_hi) {
    const auto& states = ext.states();
    if (states.back().t < 50.0) {
        throw DiagnosticError("decay fit needs a trajectory reaching t >= 50");
    }
    if (t_hi < 0.0) {
        t_hi = states.back().t;
    }
    std::vector<double> x;
    std::vector<double> y;
    DecayFit fit;
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& s : states) {
        if (s.t < t_lo - 1e-12 || s.t > t_hi + 1e-12 * t_hi) {
            continue;
        }
        double e = 0.0;
        for (double u : s.u) {
            e = std::max(e, std::abs(u - 1.0));
        }
        smallest = std::min(smallest, e);
        x.push_back(std::log(s.t));
        y.push_back(std::log(e));
    }
    if (x.size() < 3) {
        throw DiagnosticError("decay window holds fewer than 3 samples");
    }
    fit.samples = x.size();
    if (smallest < 1e-13) {
        fit.degenerate = true;
        fit.note = "max|u - 1| = " + fmt(smallest) + " is at the rounding floor; lapse is already hyperbolic";
        return fit;
    }
    const auto [slope, intercept] = linear_fit(x, y);
    fit.slope = slope;
    fit.C = std::exp(intercept);
    fit.note = "fit over t in [" + fmt(std::exp(x.front())) + ", " + fmt(std::exp(x.back())) + "]";
    return fit;
}

AHReport ah_asymptotics_check(const ExtensionTrajectory& ext, const FlowTrajectory& flow, double t_lo) {
    const auto& states = ext.states();
    AHReport r;
    if (states.back().t < 50.0) {
        throw DiagnosticError("asymptotics check needs a trajectory reaching t >= 50");
    }
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& s : states) {
        if (s.t < t_lo) {
            continue;
        }
        const double t = s.t;
        const double t4 = t * t * t * t;
        double worst = 0.0;
        for (double w : s.w) {
            // u^2/(1+t^2) - 1/t^2 + 1/t^4 = (t^4 (1-w)/w + 1) / (t^4 (1+t^2))
            const double residual = (t4 * (1.0 - w) / w + 1.0) / (t4 * (1.0 + t * t));
            worst = std::max(worst, std::abs(residual));
        }
        const double scaled = std::pow(t, 5) * worst;
        r.sup_scaled = std::max(r.sup_scaled, scaled);
        if (scaled > 0.0) {
            x.push_back(std::log(t));
            y.push_back(std::log(scaled));
        }
    }
    if (x.size() < 3) {
        throw DiagnosticError("asymptotics window holds fewer than 3 samples");
    }
    r.growth_slope = linear_fit(x, y).first;
    const FlowState last = flow.at(states.back().t);
    r.final_max_msq = *std::max_element(last.Msq.begin(), last.Msq.end());
    r.bounded = std::isfinite(r.sup_scaled) && r.growth_slope <= 0.25;
    r.note = "t^5 residual sup " + fmt(r.sup_scaled) + ", log-log slope " + fmt(r.growth_slope) +
             ", final max |M|^2 " + fmt(r.final_max_msq);
    return r;
}

RigidityReport rigidity_diagnostics(const MassSeries& series, const MassLimit& limit, double gap_tol,
                                    double triple_tol) {
    RigidityReport r;
    if (series.times.empty()) {
        throw DiagnosticError("rigidity needs a non-empty mass series");
    }
    r.max_rbar_excess = *std::max_element(series.max_rbar_excess.begin(), series.max_rbar_excess.end());
    r.msq_at_start = series.max_msq.front();
    r.max_grad_u = max_abs(series.max_grad_u);
    r.mass_gap = limit.value - series.mass_formula.front();
    r.rigid = std::abs(r.mass_gap) < gap_tol;
    const bool triple_vanishes =
        r.max_rbar_excess < triple_tol && r.msq_at_start < triple_tol && r.max_grad_u < triple_tol;
    r.consistent = r.rigid == triple_vanishes;
    r.note = r.rigid ? (triple_vanishes ? "rigid: mass gap and triple vanish" : "mass gap vanishes but the triple does not")
                     : (triple_vanishes ? "triple vanishes but the mass grows" : "non-rigid: mass grows and the triple is nonzero");
    return r;
}

void write_master_csv(const std::string& path, const ExtensionTrajectory& ext, const BoundEnvelope& env,
                      const MassSeries& series, std::span<const double> phi) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigurationError("cannot write " + path);
    }
    const auto [phi_lo, phi_hi] = std::minmax_element(phi.begin(), phi.end());
    out << "t,min_u,max_u,delta_lower,delta_upper,lower_bound,upper_bound,mass_def,mass_formula,dmass_dt,max_msq,"
           "max_rbar_excess\n"
        << std::setprecision(17);
    const auto& states = ext.states();
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto [umin, umax] = std::minmax_element(states[i].u.begin(), states[i].u.end());
        out << states[i].t << ',' << *umin << ',' << *umax << ',' << env.delta_lower[i] << ',' << env.delta_upper[i]
            << ',' << lower_bound(env, i, *phi_hi) << ',' << upper_bound(env, i, *phi_lo) << ','
            << series.mass_def[i] << ',' << series.mass_formula[i] << ',' << series.dmass[i] << ','
            << series.max_msq[i] << ',' << series.max_rbar_excess[i] << '\n';
    }
}

}  // namespace ahrf
