#pragma once

#include <stdexcept>
#include <string>

namespace s2t {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or schema violation (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable input file (CLI exit code 3).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A loss or activation became non-finite (CLI exit code 4).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact failed integrity checks.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2t
