#pragma once

#include <stdexcept>
#include <string>

namespace disms {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor rank/extent mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid hyperparameter or configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Tape misuse, missing checkpoint, or other lifecycle problems.
struct StateError : Error {
  using Error::Error;
};

// Corrupt or inconsistent dataset / file contents.
struct DataError : Error {
  using Error::Error;
};

// Filesystem failures, reported with the offending path.
struct IoError : Error {
  using Error::Error;
};

// Non-finite loss during training.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace disms
