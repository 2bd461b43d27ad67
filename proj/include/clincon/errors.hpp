#pragma once

#include <stdexcept>
#include <string>

namespace clincon {

// Error hierarchy. The CLI maps each family onto an exit code:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, configuration, or preconditions on parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (manifests, payloads, labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace clincon
