#pragma once

// Discrete axisymmetric geometry on S^2.
//
// Metrics have the form g = A(theta) dtheta^2 + B(theta) dphi^2 and all fields
// depend on theta only. Nodes are cell centred, theta_k = (k + 1/2) pi / n, so no
// node sits on a pole. Values outside [0, pi] are supplied by reflection across
// the poles: scalars and A are even, sqrt(B) is odd.
//
// Derivatives use sixth-order staggered (node <-> face) and centred stencils.
// The effective spacings are calibrated so that cos(theta) and sin(theta) are
// differentiated exactly, which makes the round sphere a discrete fixed point:
// its curvature is exactly 1 and the discrete Gauss-Bonnet identity holds to
// rounding. Integration weights are the left null vector of the discrete
// divergence, so every discrete Laplacian integrates to zero.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "ahrf/banded.hpp"

namespace ahrf {

using ScalarField = std::vector<double>;

enum class Parity { even = 1, odd = -1 };

class SphereGrid {
public:
    /// Minimum node count accepted by build_grid.
    static constexpr std::size_t min_nodes = 16;

    std::size_t size() const noexcept { return data_->n; }
    double spacing() const noexcept { return data_->h; }
    std::span<const double> theta() const noexcept { return data_->theta; }
    /// Face positions j h, j = 0..n; faces 0 and n are the poles.
    std::span<const double> faces() const noexcept { return data_->faces; }
    /// Quadrature weights for the integral over [0, pi].
    std::span<const double> weights() const noexcept { return data_->weights; }

    /// Node values -> face values of df/dtheta (n + 1 entries).
    ScalarField face_gradient(std::span<const double> f, Parity parity) const;
    /// Node values -> face values of f (n + 1 entries).
    ScalarField face_interpolate(std::span<const double> f, Parity parity) const;
    /// Face values of an even flux -> node values of dF/dtheta.
    ScalarField divergence(std::span<const double> flux) const;
    /// Node values -> node values of df/dtheta.
    ScalarField node_derivative(std::span<const double> f, Parity parity) const;

    /// Folded stencil of face_gradient for even data: (node, coefficient) pairs per face.
    struct Tap {
        std::size_t index;
        double coeff;
    };
    std::span<const std::vector<Tap>> gradient_taps() const noexcept { return data_->grad_taps; }
    /// Folded stencil of divergence for even fluxes: (face, coefficient) pairs per node.
    std::span<const std::vector<Tap>> divergence_taps() const noexcept { return data_->div_taps; }

    bool operator==(const SphereGrid& other) const noexcept { return data_ == other.data_; }

private:
    friend SphereGrid build_grid(std::size_t n);

    struct Data {
        std::size_t n = 0;
        double h = 0.0;
        double staggered_h = 0.0;
        double centred_h = 0.0;
        std::vector<double> theta;
        std::vector<double> faces;
        std::vector<double> weights;
        std::vector<std::vector<Tap>> grad_taps;
        std::vector<std::vector<Tap>> div_taps;
    };
    explicit SphereGrid(std::shared_ptr<const Data> data) : data_(std::move(data)) {}

    std::shared_ptr<const Data> data_;
};

/// Builds the cell-centred grid; throws ConfigurationError for n < 16.
SphereGrid build_grid(std::size_t n);

class AxisymMetric {
public:
    /// Throws DomainError unless A and B are finite and positive at every node.
    AxisymMetric(SphereGrid grid, ScalarField A, ScalarField B);

    const SphereGrid& grid() const noexcept { return grid_; }
    std::span<const double> A() const noexcept { return A_; }
    std::span<const double> B() const noexcept { return B_; }
    /// sqrt(A) and sqrt(B) at the nodes.
    std::span<const double> a() const noexcept { return a_; }
    std::span<const double> b() const noexcept { return b_; }

private:
    SphereGrid grid_;
    ScalarField A_;
    ScalarField B_;
    ScalarField a_;
    ScalarField b_;
};

AxisymMetric round_metric(const SphereGrid& grid);

/// Conformal perturbation exp(2 eps P_l(cos theta)) of the round metric, rescaled to area 4 pi.
/// Requires |eps| < 0.3 and l >= 2.
AxisymMetric perturbed_metric(const SphereGrid& grid, double eps, int l);

/// Constant rescaling to area exactly 4 pi.
AxisymMetric normalize_area(const AxisymMetric& metric);

/// Largest deviation of B / (A theta^2) from 1 at the two polar nodes (distance to the pole in place of theta).
double pole_regularity_defect(const AxisymMetric& metric);

ScalarField gaussian_curvature(const AxisymMetric& metric);
ScalarField scalar_curvature(const AxisymMetric& metric);

ScalarField laplace_beltrami(const AxisymMetric& metric, std::span<const double> f);

/// Matrix of laplace_beltrami (bandwidth 5 on either side).
BandedMatrix laplacian_matrix(const AxisymMetric& metric);

/// Mean-zero solution of Delta_g f = rhs. Throws InconsistentSourceError if the
/// integral of rhs exceeds 1e-8 (relative to the integral of |rhs| when that is larger than 1).
ScalarField solve_poisson(const AxisymMetric& metric, std::span<const double> rhs);

struct Hessian {
    ScalarField theta_theta;
    ScalarField phi_phi;
};

/// Covariant Hessian D_i D_j f. The trace g^{ij} H_ij reproduces laplace_beltrami exactly.
Hessian hessian(const AxisymMetric& metric, std::span<const double> f);

/// g(grad f, grad h) = f' h' / A.
ScalarField gradient_dot(const AxisymMetric& metric, std::span<const double> f, std::span<const double> h);

/// Integral over the sphere with respect to the area form of the metric.
double integrate(const AxisymMetric& metric, std::span<const double> field);
double area(const AxisymMetric& metric);

}  // namespace ahrf
