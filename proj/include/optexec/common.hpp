#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace optexec {

/// All randomness in the library flows through explicitly passed generators of this type.
using Rng = std::mt19937_64;

/// Raised when an argument lies outside an operation's domain (negative time,
/// infeasible trade, stepping past the horizon, shape mismatch).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised by the dense solver when a pivot collapses.
class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(std::size_t pivot_index, double pivot_value);

    std::size_t pivot_index() const noexcept { return pivot_index_; }
    double pivot_value() const noexcept { return pivot_value_; }

private:
    std::size_t pivot_index_;
    double pivot_value_;
};

/// Malformed config file, unknown key or bad override.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint or replay file that cannot be parsed or does not match the run.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace optexec
