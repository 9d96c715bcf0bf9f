#pragma once

#include <stdexcept>
#include <string>

namespace rbsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad shape, out-of-range time, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// The solver declines to run because the grid is too coarse for the declared
/// Lipschitz constants. `required_steps` is the smallest uniform step count
/// that would be accepted.
class SolverRefusal : public Error {
public:
    SolverRefusal(const std::string& what, std::size_t required_steps)
        : Error(what), required_steps_(required_steps) {}

    std::size_t required_steps() const noexcept { return required_steps_; }

private:
    std::size_t required_steps_;
};

}  // namespace rbsde
