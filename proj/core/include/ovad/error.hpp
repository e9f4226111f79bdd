#pragma once

#include <stdexcept>
#include <string>

namespace ovad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent on-disk data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A model evaluation produced a non-finite value.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ovad
