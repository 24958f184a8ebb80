#pragma once

#include <stdexcept>
#include <string>

namespace tgq {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point was outside the chart domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A geodesic left the chart domain while being integrated.
class ExcursionError : public Error {
public:
    ExcursionError(const std::string& what, double exit_parameter)
        : Error(what), exit_parameter_(exit_parameter) {}
    /// Affine parameter of the last accepted step inside the domain.
    double exit_parameter() const noexcept { return exit_parameter_; }

private:
    double exit_parameter_;
};

/// A tangent vector or point separation exceeded the chart's injectivity floor.
class InjectivityError : public Error {
public:
    using Error::Error;
};

/// An iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Two groupoid elements cannot be composed.
class ComposabilityError : public Error {
public:
    using Error::Error;
};

/// Grid or operator shapes do not match.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A sampled function produced a non-finite value.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// The requested combination of inputs is not implemented.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation was violated.
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace tgq
