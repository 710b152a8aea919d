#pragma once

#include <stdexcept>
#include <string>

namespace trg {

// Every failure raised by the library derives from Error so callers can
// catch one type; the subclasses map onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/inf or an undefined quantity (log of zero probability, diverged loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

// A hyperparameter or structural setting is outside its valid range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The API was called in a way its contract forbids.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace trg
