#include "ahrf/banded.hpp"

#include <lapacke.h>

#include <string>

#include "ahrf/errors.hpp"

namespace ahrf {

BandedMatrix::BandedMatrix(std::size_t n, int lower, int upper)
    : n_(n), kl_(lower), ku_(upper), ldab_(2 * lower + upper + 1),
      ab_(static_cast<std::size_t>(ldab_) * n, 0.0) {}

bool BandedMatrix::in_band(std::size_t i, std::size_t j) const noexcept {
    const auto ii = static_cast<long>(i);
    const auto jj = static_cast<long>(j);
    return i < n_ && j < n_ && jj - ii <= ku_ && ii - jj <= kl_;
}

double& BandedMatrix::at(std::size_t i, std::size_t j) {
    if (!in_band(i, j)) {
        throw NumericalError("banded matrix: entry outside band");
    }
    const auto row = static_cast<std::size_t>(kl_ + ku_) + i - j;
    return ab_[j * static_cast<std::size_t>(ldab_) + row];
}

double BandedMatrix::at(std::size_t i, std::size_t j) const {
    if (!in_band(i, j)) {
        return 0.0;
    }
    const auto row = static_cast<std::size_t>(kl_ + ku_) + i - j;
    return ab_[j * static_cast<std::size_t>(ldab_) + row];
}

void BandedMatrix::set_zero_row(std::size_t i) {
    for (std::size_t j = 0; j < n_; ++j) {
        if (in_band(i, j)) {
            at(i, j) = 0.0;
        }
    }
}

std::vector<double> BandedMatrix::apply(std::span<const double> x) const {
    std::vector<double> y(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
        const std::size_t lo = i > static_cast<std::size_t>(kl_) ? i - static_cast<std::size_t>(kl_) : 0;
        const std::size_t hi = std::min(n_ - 1, i + static_cast<std::size_t>(ku_));
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            s += at(i, j) * x[j];
        }
        y[i] = s;
    }
    return y;
}

std::vector<double> BandedMatrix::solve(std::span<const double> rhs) const {
    std::vector<double> factors = ab_;
    std::vector<double> x(rhs.begin(), rhs.end());
    std::vector<lapack_int> pivots(n_);
    const lapack_int info = LAPACKE_dgbsv(LAPACK_COL_MAJOR, static_cast<lapack_int>(n_), kl_, ku_, 1,
                                          factors.data(), ldab_, pivots.data(), x.data(),
                                          static_cast<lapack_int>(n_));
    if (info != 0) {
        throw NumericalError("banded solve failed (dgbsv info=" + std::to_string(info) + ")");
    }
    return x;
}

}  // namespace ahrf
