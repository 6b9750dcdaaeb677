#pragma once

#include <stdexcept>
#include <string>

namespace carre {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// generator construction
class NotSquareError : public Error {
 public:
  using Error::Error;
};
class NegativeRateError : public Error {
 public:
  NegativeRateError(long i, long j, double value)
      : Error("negative off-diagonal rate q[" + std::to_string(i) + "][" +
              std::to_string(j) + "] = " + std::to_string(value)),
        row(i),
        col(j) {}
  long row, col;
};
class RowSumViolationError : public Error {
 public:
  RowSumViolationError(long i, double sum)
      : Error("row " + std::to_string(i) +
              " does not sum to zero (sum = " + std::to_string(sum) + ")"),
        row(i) {}
  long row;
};
class NonPositiveRateError : public Error {
 public:
  using Error::Error;
};
class BadDimensionError : public Error {
 public:
  using Error::Error;
};
class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

// stationary analysis
class NotIrreducibleError : public Error {
 public:
  using Error::Error;
};
class NumericalFailureError : public Error {
 public:
  using Error::Error;
};

// semigroup
class NegativeTimeError : public Error {
 public:
  using Error::Error;
};
class ExponentialFailureError : public Error {
 public:
  using Error::Error;
};

// hilbert embedding
class ZeroWeightError : public Error {
 public:
  explicit ZeroWeightError(long i)
      : Error("measure weight " + std::to_string(i) +
              " vanishes; the L2(mu) embedding needs mu > 0"),
        index(i) {}
  long index;
};
class NotStationaryError : public Error {
 public:
  using Error::Error;
};
class NotPsdError : public Error {
 public:
  using Error::Error;
};
class EigenFailureError : public Error {
 public:
  using Error::Error;
};
class NotNormalError : public Error {
 public:
  using Error::Error;
};

// square field
class NonCommutingError : public Error {
 public:
  NonCommutingError(long op_index, double defect)
      : Error("operator " + std::to_string(op_index) +
              " does not commute with the generator (defect " +
              std::to_string(defect) + ")"),
        index(op_index) {}
  long index;
};

// energy checks
class NonPositiveEnergyError : public Error {
 public:
  using Error::Error;
};
class GridTooCoarseError : public Error {
 public:
  using Error::Error;
};
class TailTooHeavyError : public Error {
 public:
  using Error::Error;
};
class DegenerateE0Error : public Error {
 public:
  using Error::Error;
};
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// cli / io
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace carre
