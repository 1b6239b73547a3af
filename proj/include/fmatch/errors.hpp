#pragma once

#include <stdexcept>
#include <string>

namespace fmatch {

/// Base class for all numerical and I/O failures raised by this library.
/// Argument/contract violations use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A matrix that must have (numerical) rank q does not.
class RankDeficientError : public Error {
 public:
  using Error::Error;
};

/// A model-implied covariance matrix is numerically singular.
class SingularCovarianceError : public Error {
 public:
  using Error::Error;
};

/// The q-by-q linear system of the M-step is numerically singular.
class SingularMStepError : public Error {
 public:
  using Error::Error;
};

/// A least-squares subproblem inside a completion solver is rank-deficient.
class SingularSubproblemError : public Error {
 public:
  using Error::Error;
};

/// The log-likelihood became NaN or infinite during iteration.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class EmptyFileError : public Error {
 public:
  using Error::Error;
};

class MissingColumnError : public Error {
 public:
  using Error::Error;
};

/// A cell failed numeric parsing; carries 1-based row and column location.
class NonNumericCellError : public Error {
 public:
  NonNumericCellError(const std::string& file, long row, long col, const std::string& cell)
      : Error(file + ": non-numeric cell at row " + std::to_string(row) + ", column " +
              std::to_string(col) + ": '" + cell + "'"),
        row(row),
        col(col) {}
  long row;
  long col;
};

class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

class SchemaMismatchError : public Error {
 public:
  using Error::Error;
};

class VersionMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace fmatch
