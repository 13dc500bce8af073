#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace volterra_lab {

/// Out-of-range or malformed parameter. Maps to CLI exit code 1.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of a well-parameterized function (e.g. s >= t).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A discretized family could not be built with the requested settings.
class ConstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Estimator has no meaningful value for the given input (e.g. constant path).
class UndefinedEstimate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: a non-finite value appeared, or too many paths were lost.
/// Maps to CLI exit code 2.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericalFailure {
public:
    DivergenceError(std::uint64_t seed, std::size_t step)
        : NumericalFailure("non-finite value at step " + std::to_string(step) +
                           " (path seed " + std::to_string(seed) + ")"),
          seed_(seed), step_(step) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::uint64_t seed_;
    std::size_t step_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ParameterError(message);
}

}  // namespace detail

}  // namespace volterra_lab
