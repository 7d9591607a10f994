#pragma once

// Closed forms for the round foliation of anti-de Sitter Schwarzschild space
//
//   gbar = (1 + t^2 - 2m/t)^{-1} dt^2 + t^2 sigma,
//
// which the construction reproduces from H = sqrt(8(1 - m)) and Rbar = -6.
// m = 0 is hyperbolic space.

namespace ahrf {

/// u = (1 - 2m/(t(1+t^2)))^{-1/2}. Throws DomainError inside the horizon or for m < 0.
double exact_lapse(double m, double t);

/// 1 + t^2 - 2m/t, the inverse of gbar_tt. Throws DomainError if it is not positive.
double metric_coefficient(double m, double t);

/// The real root of t^3 + t - 2m (the cubic is increasing, so it is also the largest).
double horizon_t0(double m);

/// sqrt(8(1 - m)). Throws DomainError unless 0 <= m < 1.
double mean_curvature_for_mass(double m);

/// Inverse of mean_curvature_for_mass: 1 - H^2/8.
double mass_for_mean_curvature(double H);

}  // namespace ahrf
