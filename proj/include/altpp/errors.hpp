#pragma once

#include <stdexcept>
#include <string>

namespace altpp {

// Base of every error raised by the library. Subclasses map onto the CLI exit
// codes: ConfigError -> 2, NumericError -> 3, IoError/CorruptionError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by a forward operation or a loss term.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Violated calling contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public IoError {
 public:
  using IoError::IoError;
};

class ParseError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace altpp
