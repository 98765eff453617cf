#pragma once

#include <stdexcept>
#include <string>

namespace deanet {

// Base for every error the library raises. The CLI maps the subclasses onto
// process exit codes: UsageError -> 1, DataError/ShapeError -> 2,
// NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad config key or value.
class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Solver divergence, NaN loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace deanet
