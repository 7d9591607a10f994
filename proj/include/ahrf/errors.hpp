#pragma once

#include <stdexcept>
#include <string>

namespace ahrf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: grid size, amplitudes, config ranges.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A value outside the domain of a formula (non-positive metric, H <= 0, inside a horizon).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Poisson right-hand side with nonzero integral.
class InconsistentSourceError : public Error {
public:
    using Error::Error;
};

/// Linear solve failure or other numerical breakdown.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The Ricci flow lost positivity or a step was rejected by the stability limit.
class FlowBreakdownError : public Error {
public:
    using Error::Error;
};

/// Initial lapse violates the global-existence condition and no override was given.
class AdmissibilityError : public Error {
public:
    using Error::Error;
};

/// w = u^{-2} reached zero: the lapse blew up.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, double t, double theta)
        : Error(what), t_(t), theta_(theta) {}
    double t() const noexcept { return t_; }
    double theta() const noexcept { return theta_; }

private:
    double t_;
    double theta_;
};

/// A diagnostic could not be formed from the available data.
class DiagnosticError : public Error {
public:
    using Error::Error;
};

}  // namespace ahrf
