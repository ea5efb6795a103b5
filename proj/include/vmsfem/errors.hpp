#pragma once

#include <stdexcept>
#include <string>

namespace vmsfem {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid run parameters or unsupported method/space combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Degenerate or inconsistent mesh data.
class MeshError : public Error {
public:
    using Error::Error;
};

/// Mismatched spaces, vectors or operator variants.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Linear solver breakdown, non-convergence or singular factorization.
class SolverError : public Error {
public:
    SolverError(const std::string& what, int iterations = -1, double residual = -1.0)
        : Error(what), iterations_(iterations), residual_(residual) {}

    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    int iterations_;
    double residual_;
};

/// Missing history data (e.g. pressure) when advancing a state.
class StateError : public Error {
public:
    using Error::Error;
};

/// Quantity-of-interest evaluation failure.
class DiagnosticError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace vmsfem
