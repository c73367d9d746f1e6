#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace dra {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, bad arguments, malformed configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Blowup, step underflow, singular matrices, solver non-convergence.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what) {}
  NumericalError(const std::string& what, double when) : Error(what), when_(when) {}

  /// Simulation time at which the failure occurred (NaN if not applicable).
  double when() const { return when_; }

 private:
  double when_ = std::numeric_limits<double>::quiet_NaN();
};

/// The interaction graph violates the algorithm's standing assumption
/// (strongly connected and weight-balanced).
class AssumptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace dra
