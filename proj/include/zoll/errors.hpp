#pragma once

#include <stdexcept>
#include <string>

namespace zoll {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the regime where the operation is defined
/// (distance beyond the injectivity radius, k too small, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Adaptive step control could not meet the requested tolerance.
class IntegratorFailure : public Error {
public:
  using Error::Error;
};

/// An inner Newton iteration (geodesic shooting) stalled.
class ConvergenceFailure : public Error {
public:
  using Error::Error;
};

class MaxIterations : public Error {
public:
  using Error::Error;
};

/// A critical-point search left the domain sum d^2 < rho^2.
class BoundaryEscape : public Error {
public:
  using Error::Error;
};

/// Velocity pattern at joints 0 and 1 matches none of the admissible kinds.
class UnclassifiableCritical : public Error {
public:
  using Error::Error;
};

class InconclusiveScan : public Error {
public:
  using Error::Error;
};

/// Invalid or incomplete run configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace zoll
