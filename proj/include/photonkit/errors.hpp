#pragma once

#include <stdexcept>
#include <string>

namespace photonkit {

// Base of all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters, malformed inputs, degenerate designs. CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// I/O failures (missing files, bad magic, short reads). CLI exit code 4.
class IoError : public Error {
 public:
  using Error::Error;
};

// Fit-stage failures other than plain non-convergence. CLI exit code 3.
class FitError : public Error {
 public:
  using Error::Error;
};

struct DegenerateRates : ValidationError {
  using ValidationError::ValidationError;
};
struct CapacityExceeded : ValidationError {
  using ValidationError::ValidationError;
};
struct EmptyChannel : ValidationError {
  using ValidationError::ValidationError;
};
struct MissingSync : ValidationError {
  using ValidationError::ValidationError;
};
struct DegenerateNormalization : ValidationError {
  using ValidationError::ValidationError;
};
struct EmptyDecay : ValidationError {
  using ValidationError::ValidationError;
};
struct DegenerateDesign : ValidationError {
  using ValidationError::ValidationError;
};
struct EmptySpectrum : ValidationError {
  using ValidationError::ValidationError;
};
struct InsufficientSamples : ValidationError {
  using ValidationError::ValidationError;
};
struct DegenerateGeometry : ValidationError {
  using ValidationError::ValidationError;
};
struct RangeOrder : ValidationError {
  using ValidationError::ValidationError;
};
struct OutOfRange : ValidationError {
  using ValidationError::ValidationError;
};
struct UnwrapStep : ValidationError {
  using ValidationError::ValidationError;
};
struct UncalibratableRegion : ValidationError {
  using ValidationError::ValidationError;
};

struct InvalidRegime : FitError {
  using FitError::FitError;
};
struct UnstableBootstrap : FitError {
  using FitError::FitError;
};

}  // namespace photonkit
