#include "ahrf/extension_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "ahrf/errors.hpp"

namespace ahrf {

namespace {

constexpr double kSqrt8 = 2.0 * std::numbers::sqrt2;

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(6) << v;
    return out.str();
}

// Linear interpolation weights of x in the increasing sequence xs (clamped at the ends).
std::pair<std::size_t, double> locate(const std::vector<double>& xs, double x) {
    if (xs.size() == 1 || x <= xs.front()) {
        return {0, 0.0};
    }
    if (x >= xs.back()) {
        return {xs.size() - 2, 1.0};
    }
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
    return {i, (x - xs[i]) / (xs[i + 1] - xs[i])};
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        cells.push_back(cell);
    }
    return cells;
}

double parse_number(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (text.find_first_not_of(" \t\r", used) != std::string::npos || !std::isfinite(v)) {
            throw ConfigurationError("bad number '" + text + "' in " + where);
        }
        return v;
    } catch (const std::logic_error&) {
        throw ConfigurationError("bad number '" + text + "' in " + where);
    }
}

}  // namespace

RbarProfile RbarProfile::constant() { return RbarProfile(); }

RbarProfile RbarProfile::tail(double a) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
        throw ConfigurationError("tail amplitude must be finite and >= 0");
    }
    RbarProfile p;
    p.kind_ = Kind::tail;
    p.amplitude_ = a;
    return p;
}

RbarProfile RbarProfile::table(std::vector<double> times, std::vector<double> thetas,
                               std::vector<std::vector<double>> values) {
    if (times.empty() || thetas.empty()) {
        throw ConfigurationError("Rbar table needs at least one time and one angle");
    }
    if (values.size() != times.size()) {
        throw ConfigurationError("Rbar table row count does not match its times");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw ConfigurationError("Rbar table times must increase strictly");
        }
    }
    for (std::size_t j = 1; j < thetas.size(); ++j) {
        if (!(thetas[j] > thetas[j - 1])) {
            throw ConfigurationError("Rbar table angles must increase strictly");
        }
    }
    if (thetas.front() < 0.0 || thetas.back() > std::numbers::pi) {
        throw ConfigurationError("Rbar table angles must lie in [0, pi]");
    }
    RbarProfile p;
    p.kind_ = Kind::table;
    std::size_t clamped = 0;
    double worst = 0.0;
    for (auto& row : values) {
        if (row.size() != thetas.size()) {
            throw ConfigurationError("Rbar table row length does not match its angles");
        }
        for (double& v : row) {
            if (!std::isfinite(v)) {
                throw ConfigurationError("Rbar table holds a non-finite value");
            }
            if (v < -6.0) {
                worst = std::max(worst, -6.0 - v);
                v = -6.0;
                ++clamped;
            }
        }
    }
    if (clamped > 0) {
        p.warnings_.push_back("Rbar table: clamped " + std::to_string(clamped) + " values up to -6 (largest shortfall " +
                              fmt(worst) + ")");
    }
    p.times_ = std::move(times);
    p.thetas_ = std::move(thetas);
    p.values_ = std::move(values);
    return p;
}

RbarProfile RbarProfile::load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigurationError("cannot open Rbar table " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigurationError("Rbar table " + path + " is empty");
    }
    const auto header = split_csv(line);
    if (header.size() < 2) {
        throw ConfigurationError("Rbar table header needs t and at least one angle");
    }
    std::vector<double> thetas;
    for (std::size_t j = 1; j < header.size(); ++j) {
        thetas.push_back(parse_number(header[j], path + " header"));
    }
    std::vector<double> times;
    std::vector<std::vector<double>> values;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw ConfigurationError(path + " row " + std::to_string(row_no) + " has the wrong number of columns");
        }
        const std::string where = path + " row " + std::to_string(row_no);
        times.push_back(parse_number(cells[0], where));
        std::vector<double> row;
        for (std::size_t j = 1; j < cells.size(); ++j) {
            row.push_back(parse_number(cells[j], where));
        }
        values.push_back(std::move(row));
    }
    return table(std::move(times), std::move(thetas), std::move(values));
}

double RbarProfile::operator()(double t, double theta) const {
    switch (kind_) {
        case Kind::constant:
            return -6.0;
        case Kind::tail:
            return -6.0 + amplitude_ / std::pow(t, 5);
        case Kind::table:
            break;
    }
    const auto [j, b] = locate(thetas_, theta);
    auto row_value = [&](std::size_t i) {
        const auto& row = values_[i];
        return row.size() == 1 ? row[0] : (1.0 - b) * row[j] + b * row[j + 1];
    };
    if (t > times_.back()) {
        const double excess = row_value(times_.size() - 1) + 6.0;
        return -6.0 + excess * std::pow(times_.back() / t, 5);
    }
    if (times_.size() == 1) {
        return row_value(0);
    }
    const auto [i, a] = locate(times_, t);
    return (1.0 - a) * row_value(i) + a * row_value(i + 1);
}

ScalarField RbarProfile::sample(const SphereGrid& grid, double t) const {
    ScalarField out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out[k] = (*this)(t, grid.theta()[k]);
    }
    return out;
}

double RbarProfile::max_excess(const SphereGrid& grid, double t) const {
    double m = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        m = std::max(m, (*this)(t, grid.theta()[k]) + 6.0);
    }
    return m;
}

double RbarProfile::tail_start() const noexcept { return kind_ == Kind::table ? times_.back() : 1.0; }

double RbarProfile::tail_bound() const noexcept {
    switch (kind_) {
        case Kind::constant:
            return 0.0;
        case Kind::tail:
            return amplitude_;
        case Kind::table:
            break;
    }
    double excess = 0.0;
    for (double v : values_.back()) {
        excess = std::max(excess, v + 6.0);
    }
    return excess * std::pow(times_.back(), 5);
}

std::string RbarProfile::describe() const {
    switch (kind_) {
        case Kind::constant:
            return "constant -6";
        case Kind::tail:
            return "tail -6 + " + fmt(amplitude_) + " t^-5";
        case Kind::table:
            break;
    }
    return "table " + std::to_string(times_.size()) + " x " + std::to_string(thetas_.size()) + " on t in [" +
           fmt(times_.front()) + ", " + fmt(times_.back()) + "]";
}

ExtensionState make_state(const SphereGrid& grid, double t, ScalarField w) {
    if (w.size() != grid.size()) {
        throw DomainError("lapse field does not match the grid size");
    }
    const std::size_t n = w.size();
    ExtensionState s;
    s.t = t;
    s.u.resize(n);
    s.H.resize(n);
    const double c = 2.0 * std::sqrt(1.0 + t * t) / t;
    for (std::size_t k = 0; k < n; ++k) {
        if (!(w[k] > 0.0) || !std::isfinite(w[k])) {
            throw BlowUpError("w = u^-2 left the positive range at t = " + fmt(t) + ", theta = " +
                                  fmt(grid.theta()[k]),
                              t, grid.theta()[k]);
        }
        s.u[k] = 1.0 / std::sqrt(w[k]);
        s.H[k] = c / s.u[k];
    }
    s.w = std::move(w);
    return s;
}

ScalarField initial_lapse(std::span<const double> H) {
    ScalarField phi(H.size());
    for (std::size_t k = 0; k < H.size(); ++k) {
        if (!(H[k] > 0.0) || !std::isfinite(H[k])) {
            throw DomainError("initial mean curvature must be positive and finite");
        }
        phi[k] = kSqrt8 / H[k];
    }
    return phi;
}

AdmissibilityReport check_global_condition(std::span<const double> phi, double K) {
    AdmissibilityReport r;
    r.K = K;
    r.max_phi = phi.empty() ? 0.0 : *std::max_element(phi.begin(), phi.end());
    const bool positive = !phi.empty() && std::all_of(phi.begin(), phi.end(), [](double v) { return v > 0.0; });
    if (!std::isfinite(K)) {
        r.message = "K is not finite";
        return r;
    }
    if (K <= 0.0) {
        r.phi_threshold = std::numeric_limits<double>::infinity();
        r.H_threshold = 0.0;
        r.admissible = positive;
        r.message = positive ? "K <= 0: every positive initial lapse is admissible" : "initial lapse is not positive";
        return r;
    }
    r.phi_threshold = 1.0 / std::sqrt(K);
    r.H_threshold = 2.0 * std::sqrt(2.0 * K);
    r.admissible = positive && r.max_phi < r.phi_threshold;
    r.message = r.admissible ? "max phi = " + fmt(r.max_phi) + " < 1/sqrt(K) = " + fmt(r.phi_threshold)
                             : "max phi = " + fmt(r.max_phi) + " >= 1/sqrt(K) = " + fmt(r.phi_threshold) +
                                   " (H must exceed " + fmt(r.H_threshold) + ")";
    return r;
}

namespace {

// Everything in dw/dt except the diffusion term, which is returned separately
// as the per-node factor multiplying Lap w.
struct SplitRhs {
    ScalarField explicit_part;
    ScalarField diffusion_coeff;
};

SplitRhs split_rhs(const SphereGrid& grid, double t, std::span<const double> w, const FlowState& flow,
                   const RbarProfile& Rbar) {
    const std::size_t n = w.size();
    const auto& metric = flow.metric;
    ScalarField u(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(w[k] > 0.0) || !std::isfinite(w[k])) {
            throw BlowUpError("w = u^-2 left the positive range at t = " + fmt(t) + ", theta = " +
                                  fmt(grid.theta()[k]),
                              t, grid.theta()[k]);
        }
        u[k] = 1.0 / std::sqrt(w[k]);
    }
    const ScalarField du_dw = gradient_dot(metric, u, w);
    const double t2 = t * t;
    const double scale = 1.0 / (t * (1.0 + t2));
    SplitRhs out;
    out.explicit_part.resize(n);
    out.diffusion_coeff.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double rbar = Rbar(t, grid.theta()[k]);
        const double source = 0.5 * (flow.R[k] - t2 * rbar);
        const double damping = 1.0 + 3.0 * t2 + t2 * (1.0 + t2) * flow.Msq[k] / 2.0;
        out.explicit_part[k] = (1.5 * u[k] * du_dw[k] + source - w[k] * damping) * scale;
        out.diffusion_coeff[k] = scale / (2.0 * w[k]);
    }
    return out;
}

// (I - s diag(coeff) L) x = rhs
ScalarField implicit_solve(const BandedMatrix& L, std::span<const double> coeff, double s,
                           std::span<const double> rhs) {
    const std::size_t n = L.size();
    BandedMatrix M(n, L.lower(), L.upper());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > static_cast<std::size_t>(L.lower()) ? i - L.lower() : 0;
        const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(L.upper()));
        for (std::size_t j = lo; j <= hi; ++j) {
            M.at(i, j) = -s * coeff[i] * L.at(i, j);
        }
        M.at(i, i) += 1.0;
    }
    return M.solve(rhs);
}

struct Attempt {
    std::optional<ScalarField> w;
    double rel_change = 0.0;
};

Attempt attempt_step(const ExtensionState& state, const FlowState& flow_mid, const BandedMatrix& L,
                     const RbarProfile& Rbar, const SphereGrid& grid, double dt) {
    const std::size_t n = state.w.size();
    const double th = state.t + 0.5 * dt;
    Attempt result;

    // Both stages solve for the increment over w_n so that L w_n comes from the
    // operator itself, which annihilates constants exactly; the assembled matrix
    // only acts on the increment.
    const ScalarField lap_w = laplace_beltrami(flow_mid.metric, state.w);
    const SplitRhs first = split_rhs(grid, th, state.w, flow_mid, Rbar);
    ScalarField rhs(n);
    for (std::size_t k = 0; k < n; ++k) {
        rhs[k] = 0.5 * dt * (first.diffusion_coeff[k] * lap_w[k] + first.explicit_part[k]);
    }
    ScalarField w_mid = implicit_solve(L, first.diffusion_coeff, 0.5 * dt, rhs);
    for (std::size_t k = 0; k < n; ++k) {
        w_mid[k] += state.w[k];
    }
    if (!std::all_of(w_mid.begin(), w_mid.end(), [](double v) { return v > 0.0 && std::isfinite(v); })) {
        result.rel_change = std::numeric_limits<double>::infinity();
        return result;
    }

    const SplitRhs mid = split_rhs(grid, th, w_mid, flow_mid, Rbar);
    for (std::size_t k = 0; k < n; ++k) {
        rhs[k] = dt * (mid.diffusion_coeff[k] * lap_w[k] + mid.explicit_part[k]);
    }
    ScalarField w_next = implicit_solve(L, mid.diffusion_coeff, 0.5 * dt, rhs);
    for (std::size_t k = 0; k < n; ++k) {
        w_next[k] += state.w[k];
    }
    double change = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!(w_next[k] > 0.0) || !std::isfinite(w_next[k])) {
            result.rel_change = std::numeric_limits<double>::infinity();
            return result;
        }
        change = std::max(change, std::abs(w_next[k] - state.w[k]) / state.w[k]);
    }
    result.rel_change = change;
    result.w = std::move(w_next);
    return result;
}

std::pair<double, double> argmin_theta(const SphereGrid& grid, std::span<const double> w) {
    const auto it = std::min_element(w.begin(), w.end());
    return {*it, grid.theta()[static_cast<std::size_t>(it - w.begin())]};
}

}  // namespace

ScalarField rhs_w(const ExtensionState& state, const FlowState& flow, const RbarProfile& Rbar) {
    const auto& grid = flow.metric.grid();
    if (std::abs(flow.t - state.t) > 1e-12 * std::max(1.0, state.t)) {
        throw DomainError("flow state and lapse state are at different times");
    }
    const SplitRhs parts = split_rhs(grid, state.t, state.w, flow, Rbar);
    ScalarField out = laplace_beltrami(flow.metric, state.w);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = parts.explicit_part[k] + parts.diffusion_coeff[k] * out[k];
    }
    return out;
}

void ExtensionControls::validate() const {
    if (!(t_end > 1.0) || !std::isfinite(t_end)) {
        throw ConfigurationError("extension t_end must exceed 1");
    }
    if (!(dt_factor > 0.0 && dt_factor <= 1.0)) {
        throw ConfigurationError("dt_factor must lie in (0, 1]");
    }
    if (!(max_rel_change > 0.0 && max_rel_change <= 0.5)) {
        throw ConfigurationError("max_rel_change must lie in (0, 0.5]");
    }
    if (!(w_floor > 0.0 && w_floor < 1e-2)) {
        throw ConfigurationError("w_floor must lie in (0, 1e-2)");
    }
    if (!(record_fraction > 0.0 && record_fraction <= 0.1)) {
        throw ConfigurationError("record_fraction must lie in (0, 0.1]");
    }
    for (double t : output_times) {
        if (!(t >= 1.0 && t <= t_end)) {
            throw ConfigurationError("output time " + fmt(t) + " lies outside [1, t_end]");
        }
    }
}

ExtensionState advance(const ExtensionState& state, const FlowTrajectory& flow, const RbarProfile& Rbar, double dt,
                       double max_rel_change) {
    if (!(dt > 0.0)) {
        throw DomainError("advance needs dt > 0");
    }
    const SphereGrid& grid = flow.grid();
    const double dt_min = 1e-13 * std::max(1.0, state.t);
    while (true) {
        const double th = state.t + 0.5 * dt;
        const FlowState flow_mid = flow.at(th);
        const BandedMatrix L = laplacian_matrix(flow_mid.metric);
        Attempt a = attempt_step(state, flow_mid, L, Rbar, grid, dt);
        if (a.w && a.rel_change <= max_rel_change) {
            return make_state(grid, state.t + dt, std::move(*a.w));
        }
        dt *= 0.5;
        if (dt < dt_min) {
            const auto [wmin, theta] = argmin_theta(grid, state.w);
            throw BlowUpError("step size underflow near t = " + fmt(state.t) + " (min w = " + fmt(wmin) + ")",
                              state.t, theta);
        }
    }
}

ExtensionTrajectory::ExtensionTrajectory(std::vector<ExtensionState> states, ExtensionControls controls,
                                         std::optional<BlowUp> blowup, std::size_t steps)
    : states_(std::move(states)), controls_(std::move(controls)), blowup_(std::move(blowup)), steps_(steps) {
    if (states_.empty()) {
        throw DomainError("extension trajectory needs at least one state");
    }
    for (std::size_t i = 1; i < states_.size(); ++i) {
        if (!(states_[i].t > states_[i - 1].t)) {
            throw DomainError("extension trajectory times must increase strictly");
        }
    }
}

const ExtensionState& ExtensionTrajectory::state_at(double t) const {
    const auto it = std::lower_bound(states_.begin(), states_.end(), t,
                                     [](const ExtensionState& s, double v) { return s.t < v; });
    for (auto cand : {it, it == states_.begin() ? it : it - 1}) {
        if (cand != states_.end() && std::abs(cand->t - t) <= 1e-12 * std::max(1.0, t)) {
            return *cand;
        }
    }
    throw DomainError("no stored lapse state at t = " + fmt(t));
}

void ExtensionTrajectory::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw ConfigurationError("cannot write " + path);
    }
    out << "t,min_u,max_u,min_w,blowup\n" << std::setprecision(17);
    for (std::size_t i = 0; i < states_.size(); ++i) {
        const auto& s = states_[i];
        const auto [umin, umax] = std::minmax_element(s.u.begin(), s.u.end());
        const bool last = i + 1 == states_.size();
        out << s.t << ',' << *umin << ',' << *umax << ',' << *std::min_element(s.w.begin(), s.w.end()) << ','
            << (last && blowup_ ? 1 : 0) << '\n';
    }
}

void ExtensionTrajectory::write_snapshot(const std::string& path, double t, const SphereGrid& grid) const {
    const ExtensionState& s = state_at(t);
    std::ofstream out(path);
    if (!out) {
        throw ConfigurationError("cannot write " + path);
    }
    out << "# t = " << std::setprecision(17) << s.t << "\n# theta u w H\n";
    for (std::size_t k = 0; k < s.w.size(); ++k) {
        out << grid.theta()[k] << ' ' << s.u[k] << ' ' << s.w[k] << ' ' << s.H[k] << '\n';
    }
}

ExtensionTrajectory integrate_extension(const FlowTrajectory& flow, std::span<const double> H,
                                        const RbarProfile& Rbar, const ExtensionControls& controls) {
    controls.validate();
    const SphereGrid& grid = flow.grid();
    if (H.size() != grid.size()) {
        throw DomainError("mean curvature field does not match the grid size");
    }
    if (flow.t_end() < controls.t_end) {
        throw DomainError("flow trajectory ends at t = " + fmt(flow.t_end()) + " before the extension end " +
                          fmt(controls.t_end));
    }
    const ScalarField phi = initial_lapse(H);
    ScalarField w0(phi.size());
    for (std::size_t k = 0; k < phi.size(); ++k) {
        w0[k] = 1.0 / (phi[k] * phi[k]);
    }

    std::vector<double> landings = controls.output_times;
    landings.push_back(controls.t_end);
    std::sort(landings.begin(), landings.end());

    std::vector<ExtensionState> states;
    states.push_back(make_state(grid, 1.0, std::move(w0)));
    ExtensionState current = states.back();
    double next_record = 1.0 + controls.record_fraction * 2.0;
    std::size_t next_landing = 0;
    std::size_t steps = 0;
    double dt_hint = std::numeric_limits<double>::infinity();
    std::optional<BlowUp> blowup;
    const double tol = 1e-12;

    while (current.t < controls.t_end - tol * controls.t_end) {
        while (next_landing < landings.size() && landings[next_landing] <= current.t + tol * current.t) {
            ++next_landing;
        }
        const double target = std::min(next_record, landings[next_landing]);
        double dt = std::min(controls.dt_factor * grid.spacing() * current.t, dt_hint);
        bool lands = false;
        if (current.t + dt >= target - tol * target) {
            dt = target - current.t;
            lands = true;
        }
        try {
            ExtensionState next = advance(current, flow, Rbar, dt, controls.max_rel_change);
            const double taken = next.t - current.t;
            dt_hint = taken < dt ? 2.0 * taken : std::numeric_limits<double>::infinity();
            if (lands && taken == dt) {
                next.t = target;
            }
            current = std::move(next);
            ++steps;
            const auto [wmin, theta] = argmin_theta(grid, current.w);
            if (wmin < controls.w_floor) {
                states.push_back(current);
                blowup = BlowUp{current.t, theta, "min w = " + fmt(wmin) + " fell below the floor " +
                                                      fmt(controls.w_floor) + " at t = " + fmt(current.t)};
                break;
            }
        } catch (const BlowUpError& e) {
            blowup = BlowUp{e.t(), e.theta(), e.what()};
            break;
        }
        const bool on_record = current.t >= next_record - tol * next_record;
        const bool on_landing = next_landing < landings.size() &&
                                std::abs(current.t - landings[next_landing]) <= tol * current.t;
        if (on_record || on_landing) {
            states.push_back(current);
        }
        if (on_record) {
            next_record = current.t + controls.record_fraction * std::max(current.t, 2.0);
        }
    }
    return ExtensionTrajectory(std::move(states), controls, std::move(blowup), steps);
}

ExtensionTrajectory solve_extension(const FlowTrajectory& flow, std::span<const double> H, const RbarProfile& Rbar,
                                    const ExtensionControls& controls, double K) {
    const AdmissibilityReport report = check_global_condition(initial_lapse(H), K);
    if (!report.admissible && !controls.admissibility_override) {
        throw AdmissibilityError("initial data rejected: " + report.message);
    }
    ExtensionTrajectory traj = integrate_extension(flow, H, Rbar, controls);
    if (traj.blowup()) {
        throw BlowUpError("lapse blew up: " + traj.blowup()->message, traj.blowup()->t, traj.blowup()->theta);
    }
    return traj;
}

SecondFundamental second_fundamental_diagnostics(const ExtensionState& state, const FlowState& flow) {
    const std::size_t n = state.u.size();
    const double t = state.t;
    const double q = 1.0 + t * t;
    SecondFundamental out;
    out.H.resize(n);
    out.hsq.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u2 = state.u[k] * state.u[k];
        out.H[k] = 2.0 * std::sqrt(q) / (t * state.u[k]);
        out.hsq[k] = 2.0 * q / (t * t * u2) + q * flow.Msq[k] / u2;
    }
    return out;
}

}  // namespace ahrf
