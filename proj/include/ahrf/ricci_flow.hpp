#pragma once

// Hamilton's modified Ricci flow on an axisymmetric sphere of area 4 pi:
//
//   d/dt g_ij = (r - R) g_ij + 2 D_i D_j f = 2 M_ij,   Delta f = R - r,   r = 2.
//
// The metric components A, B are advanced directly (no conformal gauge), with
// classical RK4 under a parabolic step limit.

#include <optional>
#include <string>
#include <vector>

#include "ahrf/sphere_geometry.hpp"

namespace ahrf {

/// Average scalar curvature of an area-4 pi sphere.
inline constexpr double kMeanCurvatureR = 2.0;

struct FlowState {
    double t = 1.0;
    AxisymMetric metric;
    ScalarField R;
    ScalarField f;     // mean-zero Ricci potential
    ScalarField M_tt;  // M_theta theta
    ScalarField M_pp;  // M_phi phi
    ScalarField Msq;   // |M|^2_g
};

FlowState derive_fields(const AxisymMetric& metric, double t = 1.0);

struct FlowControls {
    double cfl_safety = 0.9;  // (0, 1]
    double t_end = 20.0;      // > 1
    double store_dt = 0.005;  // spacing of stored states
    /// Integration stops once max |M|^2 falls below this; every later time reuses the final metric.
    double settle_msq = 1e-22;

    /// Throws ConfigurationError for out-of-range values.
    void validate() const;
};

/// Largest RK4 step that is stable for the metric (Gershgorin bound on the Laplacian).
double stable_step(const AxisymMetric& metric);

/// One RK4 step. Throws FlowBreakdownError if dt exceeds cfl_safety * stable_step
/// or if A or B loses positivity.
FlowState step(const FlowState& state, double dt, double cfl_safety = 1.0);

struct FlowDiagnostics {
    double t;
    double area;
    double max_abs_R_minus_2;
    double max_msq;
    double min_A;
    double min_B;
};

FlowDiagnostics diagnose(const FlowState& state);

class FlowTrajectory {
public:
    FlowTrajectory(std::vector<FlowState> states, double t_end, std::optional<double> settled_at);

    const std::vector<FlowState>& states() const noexcept { return states_; }
    const std::vector<FlowDiagnostics>& diagnostics() const noexcept { return diagnostics_; }
    const SphereGrid& grid() const noexcept { return states_.front().metric.grid(); }
    double t_begin() const noexcept { return states_.front().t; }
    /// Last time the trajectory can answer queries for; infinite once the flow has settled.
    double t_end() const noexcept { return t_end_; }
    /// Time at which the flow was declared stationary, if it was.
    std::optional<double> settled_at() const noexcept { return settled_at_; }

    /// Metric at any t in [t_begin, t_end] by cubic Hermite interpolation of stored states.
    AxisymMetric metric_at(double t) const;
    /// Full state (curvature, potential, M) at t.
    FlowState at(double t) const;

    void write_csv(const std::string& path) const;

private:
    std::vector<FlowState> states_;
    std::vector<FlowDiagnostics> diagnostics_;
    double t_end_;
    std::optional<double> settled_at_;
};

FlowTrajectory evolve(const AxisymMetric& initial, const FlowControls& controls);

struct RateFit {
    double rate = 0.0;          // slope of ln(max |M|^2) in t
    double fit_residual = 0.0;  // RMS residual of the fit over the span of ln(max |M|^2)
    std::size_t samples = 0;
    bool degenerate = false;    // flow was already of constant curvature
    std::string note;
};

/// Exponential decay rate of max |M|^2 over the post-transient window t >= 2.
/// Throws DiagnosticError if the flow has not decayed (final max |M|^2 >= 1e-3)
/// or the window holds fewer than 5 samples.
RateFit convergence_rate(const FlowTrajectory& trajectory);

}  // namespace ahrf
