#pragma once

// Quantities derived from a flow trajectory and a lapse solution: the
// existence constant K, the bound envelopes for w = u^{-2}, Hawking masses,
// decay fits and rigidity diagnostics.
//
// Notation: (.)_* and (.)^* are the minimum and maximum over the sphere,
// S(s) = R_{g(s)} - s^2 Rbar, and
//
//   J^*(t) = int_1^t tau (|M|^*)^2 / 2 dtau,   J_*(t) likewise with |M|_*.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ahrf/extension_solver.hpp"
#include "ahrf/ricci_flow.hpp"

namespace ahrf {

struct KResult {
    double K = 0.0;
    double attained_at = 1.0;
    double t_max = 1.0;
    /// Why the supremum over [1, infinity) is attained inside [1, t_max].
    std::string certificate;
};

/// K = sup_t { -int_1^t S_*(s)/4 exp(J^*(s)) ds }, searched on [1, t_max].
/// Throws DiagnosticError unless max |M|^2 < 1e-8 from t_max on and S_* stays
/// positive beyond t_max, which together bound the tail.
KResult compute_K(const FlowTrajectory& flow, const RbarProfile& Rbar, double t_max);

struct BoundEnvelope {
    std::vector<double> times;
    std::vector<double> delta_lower;  // delta_*(t)
    std::vector<double> delta_upper;  // delta^*(t)
    std::vector<double> J_upper;      // J^*(t)
    std::vector<double> J_lower;      // J_*(t)
};

/// delta_*(t) = 1/(t(1+t^2)) int_1^t S_*(s)/2 exp(-(J^*(t) - J^*(s))) ds and
/// delta^*(t) likewise with S^* and J_*, at each requested time (sorted, >= 1).
BoundEnvelope delta_bounds(const FlowTrajectory& flow, const RbarProfile& Rbar, std::span<const double> times);

/// w >= delta_* + 2/(t(1+t^2)) (phi^*)^{-2} exp(-J^*)
double lower_bound(const BoundEnvelope& env, std::size_t i, double phi_max);
/// w <= delta^* + 2/(t(1+t^2)) (phi_*)^{-2} exp(-J_*)
double upper_bound(const BoundEnvelope& env, std::size_t i, double phi_min);

struct SandwichReport {
    std::size_t checked = 0;
    std::size_t lower_violations = 0;
    std::size_t upper_violations = 0;
    double max_violation = 0.0;  // largest amount by which w leaves [lower, upper]
    double worst_t = 1.0;
    double worst_theta = 0.0;
    double max_lower_gap = 0.0;  // max (w - lower)
    double max_upper_gap = 0.0;  // max (upper - w)
    double tolerance = 0.0;
};

/// Compares every stored w against the bounds; env must hold the trajectory's times.
SandwichReport check_sandwich(const ExtensionTrajectory& ext, const BoundEnvelope& env, std::span<const double> phi,
                              const SphereGrid& grid, double tolerance);

/// Hawking mass from the area and the mean curvature of {t} x Sigma with metric t^2 g(t).
double hawking_mass_def(const ExtensionState& state, const FlowState& flow);
/// (1/4pi) int t(1+t^2)/2 (1 - w) dmu_{g(t)}
double hawking_mass_formula(const ExtensionState& state, const FlowState& flow);

struct MassDerivative {
    double total = 0.0;
    double curvature_term = 0.0;  // (1/8pi) int (Rbar+6) t^2/2
    double gradient_term = 0.0;   // (1/8pi) int |grad u|^2/u^2
    double shear_term = 0.0;      // (1/8pi) int t^2(1+t^2)|M|^2/(2u^2)
};

MassDerivative mass_derivative_integrand(const ExtensionState& state, const FlowState& flow,
                                         const RbarProfile& Rbar);

struct MassSeries {
    std::vector<double> times;
    std::vector<double> mass_def;
    std::vector<double> mass_formula;
    std::vector<double> dmass;  // mass_derivative_integrand totals
    std::vector<double> max_msq;
    std::vector<double> max_rbar_excess;
    std::vector<double> max_grad_u;
};

MassSeries mass_series(const ExtensionTrajectory& ext, const FlowTrajectory& flow, const RbarProfile& Rbar);

/// Second-order derivative of samples on a nonuniform grid (one-sided at the ends).
std::vector<double> finite_difference(std::span<const double> x, std::span<const double> y);

struct MassLimit {
    double value = 0.0;
    double residual = 0.0;  // |value - m(T)|
    double exponent = 0.0;  // fitted p in m(t) = limit - c t^{-p}; 0 when the tail is flat
    std::string note;
};

/// Extrapolates m(t) from t = T/4, T/2, T assuming m(t) = limit - c t^{-p}.
/// Throws DiagnosticError if T < 50 or the samples do not converge.
MassLimit mass_limit_estimate(const MassSeries& series);

struct DecayFit {
    double slope = 0.0;
    double C = 0.0;
    std::size_t samples = 0;
    bool degenerate = false;
    std::string note;
};

/// Least-squares slope of log max|u - 1| against log t over [t_lo, t_hi].
/// Degenerate when max|u - 1| drops below 1e-13. Throws DiagnosticError if the
/// trajectory stops before 50 or the window holds fewer than 3 samples.
DecayFit decay_fit(const ExtensionTrajectory& ext, double t_lo = 10.0, double t_hi = -1.0);

struct AHReport {
    double sup_scaled = 0.0;    // sup over [t_lo, T] of t^5 |gbar_tt - (1/t^2 - 1/t^4)|
    double growth_slope = 0.0;  // log-log slope of the scaled residual
    double final_max_msq = 0.0;
    bool bounded = false;
    std::string note;
};

/// gbar_tt = u^2 / (1 + t^2) against its expansion 1/t^2 - 1/t^4 + O(t^{-5}).
AHReport ah_asymptotics_check(const ExtensionTrajectory& ext, const FlowTrajectory& flow, double t_lo = 20.0);

struct RigidityReport {
    double max_rbar_excess = 0.0;  // max over the run of Rbar + 6
    double msq_at_start = 0.0;     // max |M|^2 at t = 1
    double max_grad_u = 0.0;       // max over the run of |grad u|
    double mass_gap = 0.0;         // mass limit - m_H(Sigma_1)
    bool rigid = false;            // mass gap below gap_tol
    bool consistent = false;       // rigid exactly when the triple vanishes
    std::string note;
};

/// The run is rigid when the mass gap is below gap_tol; it is consistent when
/// rigidity and a vanishing triple (below triple_tol) go together.
RigidityReport rigidity_diagnostics(const MassSeries& series, const MassLimit& limit, double gap_tol = 1e-6,
                                    double triple_tol = 1e-8);

/// One row per stored lapse state: t, min_u, max_u, delta_lower, delta_upper,
/// lower_bound, upper_bound, mass_def, mass_formula, dmass_dt, max_msq, max_rbar_excess.
void write_master_csv(const std::string& path, const ExtensionTrajectory& ext, const BoundEnvelope& env,
                      const MassSeries& series, std::span<const double> phi);

}  // namespace ahrf
