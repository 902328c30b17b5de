#pragma once

#include <stdexcept>
#include <string>

#include "zfa/types.hpp"

namespace zfa {

/// Base class of every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed call: incompatible dimensions, non-finite values, options out of range.
struct InvalidInputError : Error {
  using Error::Error;
};

/// Input violates a mathematical precondition (nonpositive variance, constant column, ...).
struct DomainError : Error {
  using Error::Error;
};

/// A retained eigenvalue of the rescaled covariance fell at or below 1, so no real
/// loading column exists for it. Usually means k is too large for the data.
struct EigenvalueDeficitError : DomainError {
  EigenvalueDeficitError(const std::string& msg, Index column_index)
      : DomainError(msg), column(column_index) {}
  Index column;
};

/// Fewer positive singular values than requested factors.
struct RankAnomalyError : DomainError {
  using DomainError::DomainError;
};

/// A factor direction carries (numerically) no signal, e.g. singular score covariance.
struct DegenerateFactorError : DomainError {
  using DomainError::DomainError;
};

/// Text input that cannot be parsed; carries 1-based coordinates when known.
struct ParseError : DomainError {
  explicit ParseError(const std::string& msg, long row_index = 0, long column_index = 0)
      : DomainError(msg), row(row_index), column(column_index) {}
  long row;
  long column;
};

/// Model file written by an incompatible schema version.
struct VersionError : DomainError {
  using DomainError::DomainError;
};

/// File could not be opened, read, or written.
struct IoError : DomainError {
  using DomainError::DomainError;
};

/// Backend decomposition failure or non-finite intermediate result.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace zfa
