#include "ahrf/sphere_geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <numbers>
#include <string>

#include "ahrf/errors.hpp"

namespace ahrf {

namespace {

using std::numbers::pi;

// Sixth-order stencils.
// staggered derivative: sum_m D[m] (f_{j+m} - f_{j-1-m}) / h
constexpr std::array<double, 3> kStaggered = {2250.0 / 1920.0, -125.0 / 1920.0, 9.0 / 1920.0};
// midpoint interpolation: sum_m I[m] (f_{j+m} + f_{j-1-m})
constexpr std::array<double, 3> kInterp = {150.0 / 256.0, -25.0 / 256.0, 3.0 / 256.0};
// centred derivative: sum_m C[m] (f_{k+m+1} - f_{k-m-1}) / h
constexpr std::array<double, 3> kCentred = {45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0};

// Reflected node access: node k in [-3, n+2] mapped back into [0, n).
struct NodeRef {
    std::size_t index;
    double sign;
};

NodeRef fold_node(long k, std::size_t n, double parity) {
    const auto nn = static_cast<long>(n);
    if (k < 0) {
        return {static_cast<std::size_t>(-k - 1), parity};
    }
    if (k >= nn) {
        return {static_cast<std::size_t>(2 * nn - k - 1), parity};
    }
    return {static_cast<std::size_t>(k), 1.0};
}

NodeRef fold_face(long j, std::size_t n, double parity) {
    const auto nn = static_cast<long>(n);
    if (j < 0) {
        return {static_cast<std::size_t>(-j), parity};
    }
    if (j > nn) {
        return {static_cast<std::size_t>(2 * nn - j), parity};
    }
    return {static_cast<std::size_t>(j), 1.0};
}

double node_at(std::span<const double> f, long k, double parity) {
    const NodeRef r = fold_node(k, f.size(), parity);
    return r.sign * f[r.index];
}

double face_at(std::span<const double> F, long j) {
    const NodeRef r = fold_face(j, F.size() - 1, 1.0);
    return r.sign * F[r.index];
}

// Adds a folded tap, merging duplicates produced by reflection.
void add_tap(std::vector<SphereGrid::Tap>& taps, std::size_t index, double coeff) {
    for (auto& t : taps) {
        if (t.index == index) {
            t.coeff += coeff;
            return;
        }
    }
    taps.push_back({index, coeff});
}

}  // namespace

SphereGrid build_grid(std::size_t n) {
    if (n < SphereGrid::min_nodes) {
        throw ConfigurationError("grid needs at least 16 nodes, got " + std::to_string(n));
    }
    auto d = std::make_shared<SphereGrid::Data>();
    d->n = n;
    d->h = pi / static_cast<double>(n);
    const double h = d->h;

    // Calibrated so that sin/cos are differentiated exactly.
    d->staggered_h = 0.0;
    for (std::size_t m = 0; m < kStaggered.size(); ++m) {
        d->staggered_h += kStaggered[m] * 2.0 * std::sin((2.0 * static_cast<double>(m) + 1.0) * h / 2.0);
    }
    d->centred_h = 0.0;
    for (std::size_t m = 0; m < kCentred.size(); ++m) {
        d->centred_h += kCentred[m] * 2.0 * std::sin((static_cast<double>(m) + 1.0) * h);
    }

    d->theta.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        d->theta[k] = (static_cast<double>(k) + 0.5) * h;
    }
    d->faces.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        d->faces[j] = static_cast<double>(j) * h;
    }
    d->faces[n] = pi;

    const auto nn = static_cast<long>(n);
    d->grad_taps.resize(n + 1);
    for (long j = 0; j <= nn; ++j) {
        auto& taps = d->grad_taps[static_cast<std::size_t>(j)];
        for (std::size_t m = 0; m < kStaggered.size(); ++m) {
            const long mm = static_cast<long>(m);
            const double c = kStaggered[m] / d->staggered_h;
            const NodeRef hi = fold_node(j + mm, n, 1.0);
            const NodeRef lo = fold_node(j - 1 - mm, n, 1.0);
            add_tap(taps, hi.index, c);
            add_tap(taps, lo.index, -c);
        }
    }
    d->div_taps.resize(n);
    for (long k = 0; k < nn; ++k) {
        auto& taps = d->div_taps[static_cast<std::size_t>(k)];
        for (std::size_t m = 0; m < kStaggered.size(); ++m) {
            const long mm = static_cast<long>(m);
            const double c = kStaggered[m] / d->staggered_h;
            add_tap(taps, fold_face(k + 1 + mm, n, 1.0).index, c);
            add_tap(taps, fold_face(k - mm, n, 1.0).index, -c);
        }
    }

    // Weights w with sum_k w_k (div F)_k = 0 for every flux vanishing at the poles.
    // Fix w_0 = 1 and solve the interior-face equations for w_1..w_{n-1}.
    {
        const std::size_t m = n - 1;
        BandedMatrix sys(m, 4, 4);
        std::vector<double> rhs(m, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            for (const auto& tap : d->div_taps[k]) {
                const std::size_t j = tap.index;
                if (j == 0 || j == n) {
                    continue;
                }
                if (k == 0) {
                    rhs[j - 1] -= tap.coeff;
                } else {
                    sys.at(j - 1, k - 1) += tap.coeff;
                }
            }
        }
        const std::vector<double> sol = sys.solve(rhs);
        std::vector<double> w(n);
        w[0] = 1.0;
        std::copy(sol.begin(), sol.end(), w.begin() + 1);
        std::vector<double> sym(n);
        for (std::size_t k = 0; k < n; ++k) {
            sym[k] = 0.5 * (w[k] + w[n - 1 - k]);
        }
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            s += sym[k] * std::sin(d->theta[k]);
        }
        for (auto& v : sym) {
            v *= 2.0 / s;
        }
        for (double v : sym) {
            if (!(v > 0.0)) {
                throw NumericalError("quadrature weights are not positive");
            }
        }
        d->weights = std::move(sym);
    }
    return SphereGrid(std::move(d));
}

ScalarField SphereGrid::face_gradient(std::span<const double> f, Parity parity) const {
    const std::size_t n = size();
    const double p = static_cast<double>(parity);
    ScalarField out(n + 1);
    for (long j = 0; j <= static_cast<long>(n); ++j) {
        double s = 0.0;
        for (std::size_t m = 0; m < kStaggered.size(); ++m) {
            const long mm = static_cast<long>(m);
            s += kStaggered[m] * (node_at(f, j + mm, p) - node_at(f, j - 1 - mm, p));
        }
        out[static_cast<std::size_t>(j)] = s / data_->staggered_h;
    }
    return out;
}

ScalarField SphereGrid::face_interpolate(std::span<const double> f, Parity parity) const {
    const std::size_t n = size();
    const double p = static_cast<double>(parity);
    ScalarField out(n + 1);
    for (long j = 0; j <= static_cast<long>(n); ++j) {
        double s = 0.0;
        for (std::size_t m = 0; m < kInterp.size(); ++m) {
            const long mm = static_cast<long>(m);
            s += kInterp[m] * (node_at(f, j + mm, p) + node_at(f, j - 1 - mm, p));
        }
        out[static_cast<std::size_t>(j)] = s;
    }
    return out;
}

ScalarField SphereGrid::divergence(std::span<const double> flux) const {
    const std::size_t n = size();
    ScalarField out(n);
    for (long k = 0; k < static_cast<long>(n); ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < kStaggered.size(); ++m) {
            const long mm = static_cast<long>(m);
            s += kStaggered[m] * (face_at(flux, k + 1 + mm) - face_at(flux, k - mm));
        }
        out[static_cast<std::size_t>(k)] = s / data_->staggered_h;
    }
    return out;
}

ScalarField SphereGrid::node_derivative(std::span<const double> f, Parity parity) const {
    const std::size_t n = size();
    const double p = static_cast<double>(parity);
    ScalarField out(n);
    for (long k = 0; k < static_cast<long>(n); ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < kCentred.size(); ++m) {
            const long mm = static_cast<long>(m);
            s += kCentred[m] * (node_at(f, k + mm + 1, p) - node_at(f, k - mm - 1, p));
        }
        out[static_cast<std::size_t>(k)] = s / data_->centred_h;
    }
    return out;
}

AxisymMetric::AxisymMetric(SphereGrid grid, ScalarField A, ScalarField B)
    : grid_(std::move(grid)), A_(std::move(A)), B_(std::move(B)) {
    const std::size_t n = grid_.size();
    if (A_.size() != n || B_.size() != n) {
        throw DomainError("metric components do not match the grid size");
    }
    a_.resize(n);
    b_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(A_[k] > 0.0) || !(B_[k] > 0.0) || !std::isfinite(A_[k]) || !std::isfinite(B_[k])) {
            throw DomainError("metric is not positive at theta = " + std::to_string(grid_.theta()[k]));
        }
        a_[k] = std::sqrt(A_[k]);
        b_[k] = std::sqrt(B_[k]);
    }
}

AxisymMetric round_metric(const SphereGrid& grid) {
    const std::size_t n = grid.size();
    ScalarField A(n, 1.0);
    ScalarField B(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = std::sin(grid.theta()[k]);
        B[k] = s * s;
    }
    return AxisymMetric(grid, std::move(A), std::move(B));
}

AxisymMetric normalize_area(const AxisymMetric& metric) {
    const double scale = 4.0 * pi / area(metric);
    ScalarField A(metric.A().begin(), metric.A().end());
    ScalarField B(metric.B().begin(), metric.B().end());
    for (auto& v : A) {
        v *= scale;
    }
    for (auto& v : B) {
        v *= scale;
    }
    return AxisymMetric(metric.grid(), std::move(A), std::move(B));
}

AxisymMetric perturbed_metric(const SphereGrid& grid, double eps, int l) {
    if (!(std::abs(eps) < 0.3)) {
        throw ConfigurationError("perturbation amplitude must satisfy |eps| < 0.3");
    }
    if (l < 2) {
        throw ConfigurationError("perturbation mode must satisfy l >= 2");
    }
    if (eps == 0.0) {
        return round_metric(grid);
    }
    const std::size_t n = grid.size();
    ScalarField A(n);
    ScalarField B(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double th = grid.theta()[k];
        const double conf = std::exp(2.0 * eps * std::legendre(static_cast<unsigned>(l), std::cos(th)));
        const double s = std::sin(th);
        A[k] = conf;
        B[k] = conf * s * s;
    }
    return normalize_area(AxisymMetric(grid, std::move(A), std::move(B)));
}

double pole_regularity_defect(const AxisymMetric& metric) {
    const auto& g = metric.grid();
    const std::size_t n = g.size();
    const double d = g.theta()[0];
    const double north = metric.B()[0] / (metric.A()[0] * d * d);
    const double south = metric.B()[n - 1] / (metric.A()[n - 1] * d * d);
    return std::max(std::abs(north - 1.0), std::abs(south - 1.0));
}

ScalarField gaussian_curvature(const AxisymMetric& metric) {
    // K a b = -(b'/a)'. Split the flux G = b'/a as cos + dG so that the round part
    // is handled analytically (the calibrated divergence of cos is exactly -sin).
    const auto& g = metric.grid();
    const std::size_t n = g.size();
    ScalarField db(n);
    for (std::size_t k = 0; k < n; ++k) {
        db[k] = metric.b()[k] - std::sin(g.theta()[k]);
    }
    const ScalarField grad_db = g.face_gradient(db, Parity::odd);
    const ScalarField a_face = g.face_interpolate(metric.a(), Parity::even);
    ScalarField dG(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        const double c = std::cos(g.faces()[j]);
        dG[j] = (grad_db[j] + c * (1.0 - a_face[j])) / a_face[j];
    }
    // Regularity closure: b'/a = +1 at theta = 0 and -1 at theta = pi.
    dG[0] = 0.0;
    dG[n] = 0.0;
    const ScalarField div = g.divergence(dG);
    ScalarField K(n);
    for (std::size_t k = 0; k < n; ++k) {
        K[k] = (std::sin(g.theta()[k]) - div[k]) / (metric.a()[k] * metric.b()[k]);
    }
    return K;
}

ScalarField scalar_curvature(const AxisymMetric& metric) {
    ScalarField R = gaussian_curvature(metric);
    for (auto& v : R) {
        v *= 2.0;
    }
    return R;
}

namespace {

ScalarField face_conductance(const AxisymMetric& metric) {
    const auto& g = metric.grid();
    const std::size_t n = g.size();
    ScalarField ratio(n);
    for (std::size_t k = 0; k < n; ++k) {
        ratio[k] = metric.b()[k] / metric.a()[k];
    }
    ScalarField c = g.face_interpolate(ratio, Parity::odd);
    c[0] = 0.0;
    c[n] = 0.0;
    return c;
}

}  // namespace

ScalarField laplace_beltrami(const AxisymMetric& metric, std::span<const double> f) {
    const auto& g = metric.grid();
    const std::size_t n = g.size();
    const ScalarField c = face_conductance(metric);
    ScalarField flux = g.face_gradient(f, Parity::even);
    for (std::size_t j = 0; j <= n; ++j) {
        flux[j] *= c[j];
    }
    ScalarField out = g.divergence(flux);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] /= metric.a()[k] * metric.b()[k];
    }
    return out;
}

BandedMatrix laplacian_matrix(const AxisymMetric& metric) {
    const auto& g = metric.grid();
    const std::size_t n = g.size();
    const ScalarField c = face_conductance(metric);
    BandedMatrix L(n, 5, 5);
    const auto grad = g.gradient_taps();
    const auto div = g.divergence_taps();
    for (std::size_t k = 0; k < n; ++k) {
        const double scale = 1.0 / (metric.a()[k] * metric.b()[k]);
        for (const auto& face : div[k]) {
            const double cf = face.coeff * c[face.index] * scale;
            if (cf == 0.0) {
                continue;
            }
            for (const auto& node : grad[face.index]) {
                L.at(k, node.index) += cf * node.coeff;
            }
        }
    }
    return L;
}

namespace {

// Neumaier-compensated sum of w_k f_k a_k b_k.
double weighted_sum(const AxisymMetric& metric, std::span<const double> field) {
    const auto w = metric.grid().weights();
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t k = 0; k < field.size(); ++k) {
        const double term = w[k] * field[k] * metric.a()[k] * metric.b()[k];
        const double t = sum + term;
        if (std::abs(sum) >= std::abs(term)) {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

}  // namespace

double integrate(const AxisymMetric& metric, std::span<const double> field) {
    if (field.size() != metric.grid().size()) {
        throw DomainError("field does not match the grid size");
    }
    return 2.0 * pi * weighted_sum(metric, field);
}

double area(const AxisymMetric& metric) {
    const ScalarField one(metric.grid().size(), 1.0);
    return integrate(metric, one);
}

ScalarField solve_poisson(const AxisymMetric& metric, std::span<const double> rhs) {
    const std::size_t n = metric.grid().size();
    if (rhs.size() != n) {
        throw DomainError("right-hand side does not match the grid size");
    }
    const double total = integrate(metric, rhs);
    ScalarField abs_rhs(n);
    for (std::size_t k = 0; k < n; ++k) {
        abs_rhs[k] = std::abs(rhs[k]);
    }
    const double scale = std::max(1.0, integrate(metric, abs_rhs));
    if (std::abs(total) > 1e-8 * scale) {
        std::ostringstream msg;
        msg << "Poisson source has nonzero integral " << std::scientific << total;
        throw InconsistentSourceError(msg.str());
    }
    const double mean = total / area(metric);
    std::vector<double> b(n);
    bool all_zero = true;
    for (std::size_t k = 0; k < n; ++k) {
        b[k] = rhs[k] - mean;
        all_zero = all_zero && rhs[k] == 0.0;
    }
    if (all_zero) {
        return ScalarField(n, 0.0);
    }
    BandedMatrix L = laplacian_matrix(metric);
    // The system is singular along constants; pin f_0 and drop the redundant first equation.
    L.set_zero_row(0);
    L.at(0, 0) = 1.0;
    b[0] = 0.0;
    ScalarField f;
    try {
        f = L.solve(b);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("Poisson system is singular: ") + e.what());
    }
    const double fmean = integrate(metric, f) / area(metric);
    for (auto& v : f) {
        v -= fmean;
        if (!std::isfinite(v)) {
            throw NumericalError("Poisson solve produced a non-finite value");
        }
    }
    return f;
}

Hessian hessian(const AxisymMetric& metric, std::span<const double> f) {
    const auto& g = metric.grid();
    const std::size_t n = g.size();
    const ScalarField df = g.node_derivative(f, Parity::even);
    const ScalarField db = g.node_derivative(metric.b(), Parity::odd);
    const ScalarField lap = laplace_beltrami(metric, f);
    Hessian H{ScalarField(n), ScalarField(n)};
    for (std::size_t k = 0; k < n; ++k) {
        // H_phiphi = -Gamma^theta_phiphi f' = (B' / 2A) f' = b b' f' / A
        H.phi_phi[k] = metric.b()[k] * db[k] * df[k] / metric.A()[k];
        H.theta_theta[k] = metric.A()[k] * (lap[k] - H.phi_phi[k] / metric.B()[k]);
    }
    return H;
}

ScalarField gradient_dot(const AxisymMetric& metric, std::span<const double> f, std::span<const double> h) {
    const auto& g = metric.grid();
    const ScalarField df = g.node_derivative(f, Parity::even);
    const ScalarField dh = g.node_derivative(h, Parity::even);
    ScalarField out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        out[k] = df[k] * dh[k] / metric.A()[k];
    }
    return out;
}

}  // namespace ahrf
