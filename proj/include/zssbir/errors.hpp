#pragma once

#include <stdexcept>
#include <string>

namespace zssbir {

// Root of every error thrown by the library. The CLI maps `NumericalError`
// subclasses to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class CardinalityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConstraintError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Checkpoint holds a different model kind than the caller asked for.
class KindMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Non-finite value in an input file; the message names the row.
class DataError : public Error {
 public:
  using Error::Error;
};

// A training row belongs to a test class.
class SplitViolation : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace zssbir
