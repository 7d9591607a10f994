#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ahrf {

/// Square banded matrix in LAPACK general-band storage, factorized with dgbsv.
class BandedMatrix {
public:
    BandedMatrix(std::size_t n, int lower, int upper);

    std::size_t size() const noexcept { return n_; }
    int lower() const noexcept { return kl_; }
    int upper() const noexcept { return ku_; }

    /// Entry (i, j); must lie inside the band.
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    bool in_band(std::size_t i, std::size_t j) const noexcept;

    void set_zero_row(std::size_t i);

    /// y = M x
    std::vector<double> apply(std::span<const double> x) const;

    /// Solves M x = rhs with partial pivoting; throws NumericalError when singular.
    std::vector<double> solve(std::span<const double> rhs) const;

private:
    std::size_t n_;
    int kl_;
    int ku_;
    int ldab_;
    // Column-major band with kl extra rows reserved for the LU fill-in.
    std::vector<double> ab_;
};

}  // namespace ahrf
