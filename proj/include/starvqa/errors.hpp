#pragma once

#include <stdexcept>
#include <string>

namespace starvqa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad input data: frames, manifests, out-of-range scores, checkpoints.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operation requested in a state that cannot serve it.
class StateError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during training, failed gradient check, undefined metric.
class NumericError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace starvqa
