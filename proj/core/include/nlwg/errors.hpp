#pragma once

#include <stdexcept>
#include <string>

namespace nlwg {

// Common base so callers can catch everything the library throws in one place.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A wavelength/argument outside a model's validity window.
struct RangeError : Error {
  using Error::Error;
};

// Malformed or inconsistent input documents (stack files, configs).
struct ValidationError : Error {
  using Error::Error;
};

// Grid/resolution too coarse for the requested computation.
struct ResolutionError : Error {
  using Error::Error;
};

// A numerical routine failed (bracket loss, non-convergence); message carries context.
struct NumericalError : Error {
  using Error::Error;
};

// Physical constraint violated (e.g. absorbing layer at the pump wavelength).
struct ConstraintError : Error {
  using Error::Error;
};

// Arrays that must share a grid do not.
struct ShapeError : Error {
  using Error::Error;
};

// A non-differentiable primitive was used on the gradient path.
struct CompositionError : Error {
  explicit CompositionError(const std::string& primitive)
      : Error("non-differentiable primitive on gradient path: " + primitive) {}
};

// Training diverged or could not proceed.
struct TrainingError : Error {
  using Error::Error;
};

// Dataset generation could not produce the requested samples.
struct GenerationError : Error {
  using Error::Error;
};

// Mathematical domain violations (zero denominators, empty states).
struct DomainError : Error {
  using Error::Error;
};

// Phase matching has no real solution; carries the offending sine value.
struct NoRealAngleError : Error {
  double rhs;
  explicit NoRealAngleError(double rhs_value)
      : Error("no real phase-matching angle: sin(theta) = " + std::to_string(rhs_value)),
        rhs(rhs_value) {}
};

// Spectral filter window empty or excluding all support.
struct FilterError : Error {
  using Error::Error;
};

// Bad command-line usage or config (CLI exit status 2).
struct UsageError : Error {
  using Error::Error;
};

}  // namespace nlwg
