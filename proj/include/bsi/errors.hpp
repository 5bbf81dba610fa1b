#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsi {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible shapes or out-of-range sizes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A scalar parameter outside its admissible domain (e.g. beta not in (0,1)).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid user-supplied data: rank-deficient bases, bad switching instants, empty groups.
class InputError : public Error {
public:
    using Error::Error;
};

/// A symmetric factorization broke down.
class FactorizationError : public Error {
public:
    FactorizationError(const std::string& what, std::ptrdiff_t pivot)
        : Error(what + " (failing pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}

    [[nodiscard]] std::ptrdiff_t pivot() const noexcept { return pivot_; }

private:
    std::ptrdiff_t pivot_;
};

/// Numerically singular kernel or posterior for the requested hyperparameters.
class ConditioningError : public Error {
public:
    using Error::Error;
};

/// Hyperparameter estimation failed on every start.
class EstimationError : public Error {
public:
    using Error::Error;
};

}  // namespace bsi
