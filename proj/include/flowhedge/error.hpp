#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowhedge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameter or configuration outside the model's domain.
class InvalidParams : public Error {
public:
    using Error::Error;
};

/// Malformed policy / solution file or wire message.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Raised by the Model A Riccati integrator when ||A||_inf crosses the
/// configured threshold before reaching t = 0.
class BlowUpError : public Error {
public:
    BlowUpError(double t_blow, double norm)
        : Error("Riccati solution blew up at t=" + std::to_string(t_blow) +
                " (||A||=" + std::to_string(norm) + ")"),
          t_blow_(t_blow) {}

    double t_blow() const noexcept { return t_blow_; }

private:
    double t_blow_;
};

/// Iterative solver failed to converge or produced non-finite values.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::size_t step)
        : Error(what + " (time step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace flowhedge
