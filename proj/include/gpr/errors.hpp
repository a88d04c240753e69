#ifndef GPR_ERRORS_HPP
#define GPR_ERRORS_HPP

#include <sstream>
#include <stdexcept>
#include <string>

namespace gpr {

/// Short scientific rendering of a number for error messages.
inline std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

/// Base of every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An input lies outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// A discretisation cannot represent the problem to the requested accuracy.
struct ResolutionError : Error {
  using Error::Error;
};

/// The transverse box is too small for the mode to decay.
struct GridTooSmallError : ResolutionError {
  using ResolutionError::ResolutionError;
};

/// The correction potential could not be built within its admissible window.
struct ConstructionError : Error {
  using Error::Error;
};

/// An internal invariant that the mathematics guarantees was violated.
struct InvariantViolation : Error {
  using Error::Error;
};

/// Objects defined on different grids were combined.
struct InterfaceError : Error {
  using Error::Error;
};

/// NaN or Inf appeared during time stepping.
struct NumericalError : Error {
  using Error::Error;
};

/// Malformed or out-of-window configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace gpr

#endif  // GPR_ERRORS_HPP
