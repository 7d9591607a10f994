#include "ahrf/exact_solutions.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ahrf/errors.hpp"

namespace ahrf {

double exact_lapse(double m, double t) {
    if (!(m >= 0.0) || !(t > 0.0)) {
        throw DomainError("exact_lapse needs m >= 0 and t > 0");
    }
    const double radicand = 1.0 - 2.0 * m / (t * (1.0 + t * t));
    if (!(radicand > 0.0)) {
        throw DomainError("t = " + std::to_string(t) + " lies inside the horizon for m = " + std::to_string(m));
    }
    return 1.0 / std::sqrt(radicand);
}

double metric_coefficient(double m, double t) {
    if (!(t > 0.0)) {
        throw DomainError("metric_coefficient needs t > 0");
    }
    const double value = 1.0 + t * t - 2.0 * m / t;
    if (!(value > 0.0)) {
        throw DomainError("t = " + std::to_string(t) + " lies inside the horizon for m = " + std::to_string(m));
    }
    return value;
}

double horizon_t0(double m) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
        throw DomainError("horizon_t0 needs a finite m >= 0");
    }
    if (m == 0.0) {
        return 0.0;
    }
    auto p = [m](double t) { return t * t * t + t - 2.0 * m; };
    double lo = 0.0;
    double hi = 1.0 + std::cbrt(2.0 * m);
    double t = std::cbrt(2.0 * m) < 1.0 ? 2.0 * m : std::cbrt(2.0 * m);
    t = std::clamp(t, lo, hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double v = p(t);
        if (v == 0.0) {
            return t;
        }
        (v < 0.0 ? lo : hi) = t;
        double next = t - v / (3.0 * t * t + 1.0);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - t) <= 1e-16 * std::max(1.0, t) || hi - lo <= 1e-16 * hi) {
            return next;
        }
        t = next;
    }
    return t;
}

double mean_curvature_for_mass(double m) {
    if (!(m >= 0.0 && m < 1.0)) {
        throw DomainError("mass must lie in [0, 1)");
    }
    return std::sqrt(8.0 * (1.0 - m));
}

double mass_for_mean_curvature(double H) {
    if (!(H > 0.0)) {
        throw DomainError("mean curvature must be positive");
    }
    return 1.0 - H * H / 8.0;
}

}  // namespace ahrf
