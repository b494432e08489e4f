#pragma once

#include <stdexcept>
#include <string>

namespace dmmd {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters or configuration values.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Mismatched vector / matrix dimensions.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Non-finite values, overflow, or a diverged iteration.
class NumericError : public Error {
public:
  using Error::Error;
};

/// An estimator was asked for with too few samples (e.g. unbiased MMD with N < 2).
class EstimatorError : public Error {
public:
  using Error::Error;
};

/// A differentiable program contains a node that cannot be differentiated.
class UnsupportedOperation : public Error {
public:
  using Error::Error;
};

/// Malformed files (checkpoints, CSV, config).
class FormatError : public Error {
public:
  using Error::Error;
};

} // namespace dmmd
