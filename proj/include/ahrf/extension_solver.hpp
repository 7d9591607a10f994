#pragma once

// The lapse u of gbar = u^2/(1+t^2) dt^2 + t^2 g(t), evolved as w = u^{-2}:
//
//   t(1+t^2) dw/dt = 3/2 u grad u . grad w + (1/(2w)) Lap w + (R - t^2 Rbar)/2
//                    - w (1 + 3t^2 + t^2 (1+t^2) |M|^2 / 2)
//
// with g(t), R and M taken from a modified Ricci flow trajectory and
// u(1, .) = 2 sqrt(2) / H for the prescribed mean curvature H of {1} x Sigma.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ahrf/ricci_flow.hpp"
#include "ahrf/sphere_geometry.hpp"

namespace ahrf {

/// Prescribed scalar curvature of the 3-metric, never below -6.
class RbarProfile {
public:
    enum class Kind { constant, tail, table };

    /// Rbar = -6.
    static RbarProfile constant();
    /// Rbar = -6 + a t^{-5}, a >= 0.
    static RbarProfile tail(double a);
    /// values[i][j] is Rbar at (times[i], thetas[j]); bilinear in between.
    /// Values below -6 are clamped and recorded in warnings(). Beyond the last
    /// time the excess over -6 decays like t^{-5}.
    static RbarProfile table(std::vector<double> times, std::vector<double> thetas,
                             std::vector<std::vector<double>> values);
    /// Reads a CSV whose header is "t,theta_1,...,theta_m" followed by one row per time.
    static RbarProfile load_table(const std::string& path);

    Kind kind() const noexcept { return kind_; }
    double amplitude() const noexcept { return amplitude_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    double operator()(double t, double theta) const;
    ScalarField sample(const SphereGrid& grid, double t) const;
    /// Largest value of Rbar + 6 on the grid at time t.
    double max_excess(const SphereGrid& grid, double t) const;

    /// For t >= tail_start(): Rbar + 6 <= tail_bound() * t^{-5}.
    double tail_start() const noexcept;
    double tail_bound() const noexcept;

    std::string describe() const;

private:
    RbarProfile() = default;

    Kind kind_ = Kind::constant;
    double amplitude_ = 0.0;
    std::vector<double> times_;
    std::vector<double> thetas_;
    std::vector<std::vector<double>> values_;
    std::vector<std::string> warnings_;
};

struct ExtensionState {
    double t = 1.0;
    ScalarField w;
    ScalarField u;
    ScalarField H;  // mean curvature of {t} x Sigma
};

/// Builds the state at time t from w; throws BlowUpError if w <= 0 anywhere.
ExtensionState make_state(const SphereGrid& grid, double t, ScalarField w);

/// phi = 2 sqrt(2) / H. Throws DomainError unless H > 0 everywhere.
ScalarField initial_lapse(std::span<const double> H);

struct AdmissibilityReport {
    bool admissible = false;
    double K = 0.0;
    double max_phi = 0.0;
    double phi_threshold = 0.0;  // 1/sqrt(K), infinite for K <= 0
    double H_threshold = 0.0;    // 2 sqrt(2K), zero for K <= 0
    std::string message;
};

/// Checks 0 < phi < 1/sqrt(K). Every positive phi passes when K <= 0.
AdmissibilityReport check_global_condition(std::span<const double> phi, double K);

/// dw/dt at the state's time; flow must be the flow state at the same time.
ScalarField rhs_w(const ExtensionState& state, const FlowState& flow, const RbarProfile& Rbar);

struct ExtensionControls {
    double t_end = 100.0;
    /// Target step dt = dt_factor * h * t with h the grid spacing.
    double dt_factor = 4e-3;
    /// Steps are halved until max |dw| / w <= max_rel_change.
    double max_rel_change = 0.01;
    /// min w below this is treated as blow-up.
    double w_floor = 1e-8;
    /// States are recorded every record_fraction * max(t, 2).
    double record_fraction = 0.005;
    /// Times the solver lands on exactly (field snapshots, extrapolation samples).
    std::vector<double> output_times;
    bool admissibility_override = false;

    /// Throws ConfigurationError for out-of-range values.
    void validate() const;
};

/// One step from state.t. The step starts at dt and is halved until the relative
/// change of w is within max_rel_change; the returned state carries the time reached.
/// Throws BlowUpError when w leaves the positive range or the step underflows.
ExtensionState advance(const ExtensionState& state, const FlowTrajectory& flow, const RbarProfile& Rbar,
                       double dt, double max_rel_change = 0.01);

struct BlowUp {
    double t;
    double theta;
    std::string message;
};

class ExtensionTrajectory {
public:
    ExtensionTrajectory(std::vector<ExtensionState> states, ExtensionControls controls,
                        std::optional<BlowUp> blowup, std::size_t steps);

    const std::vector<ExtensionState>& states() const noexcept { return states_; }
    const ExtensionControls& controls() const noexcept { return controls_; }
    const std::optional<BlowUp>& blowup() const noexcept { return blowup_; }
    bool completed() const noexcept { return !blowup_; }
    std::size_t steps() const noexcept { return steps_; }

    /// Stored state at exactly time t; throws DomainError if there is none.
    const ExtensionState& state_at(double t) const;

    /// Columns t, min_u, max_u, min_w, blowup.
    void write_csv(const std::string& path) const;
    /// Columns theta, u, w, H for the stored state at time t.
    void write_snapshot(const std::string& path, double t, const SphereGrid& grid) const;

private:
    std::vector<ExtensionState> states_;
    ExtensionControls controls_;
    std::optional<BlowUp> blowup_;
    std::size_t steps_;
};

/// Integrates from t = 1 to controls.t_end and records a blow-up instead of throwing.
/// Does not check admissibility.
ExtensionTrajectory integrate_extension(const FlowTrajectory& flow, std::span<const double> H,
                                        const RbarProfile& Rbar, const ExtensionControls& controls);

/// Checks admissibility against K (AdmissibilityError unless overridden), integrates,
/// and throws BlowUpError if w reaches zero.
ExtensionTrajectory solve_extension(const FlowTrajectory& flow, std::span<const double> H, const RbarProfile& Rbar,
                                    const ExtensionControls& controls, double K);

struct SecondFundamental {
    ScalarField H;    // 2 sqrt(1+t^2) / (t u)
    ScalarField hsq;  // 2(1+t^2)/(t^2 u^2) + (1+t^2) |M|^2 / u^2
};

SecondFundamental second_fundamental_diagnostics(const ExtensionState& state, const FlowState& flow);

}  // namespace ahrf
