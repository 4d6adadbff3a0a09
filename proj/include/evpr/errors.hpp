#pragma once

#include <stdexcept>
#include <string>

namespace evpr {

/// Configuration document is malformed, has unknown keys, or fails validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is malformed or violates a documented precondition
/// (bad event file, non-monotone timestamps, non-positive intensity, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or geometry shapes do not line up.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// An operation was called with an out-of-domain parameter (N <= 0, C == 0, ...).
class ParamError : public DataError {
 public:
  using DataError::DataError;
};

/// Numerical failure during optimization (non-finite loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evpr
