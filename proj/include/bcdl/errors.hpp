#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bcdl
{
  class Error : public std::runtime_error
  {
  public:
    using std::runtime_error::runtime_error;
  };

  /// Precondition violated by a caller-supplied value.
  class InvalidArgument : public Error
  {
  public:
    using Error::Error;
  };

  class DimensionMismatch : public Error
  {
  public:
    using Error::Error;
  };

  /// Base for failures that the CLI reports with the numerical exit code.
  class NumericalError : public Error
  {
  public:
    using Error::Error;
  };

  class NotPositiveDefinite : public NumericalError
  {
  public:
    NotPositiveDefinite()
      : NumericalError("matrix is not positive definite") {}
    using NumericalError::NumericalError;
  };

  class DegenerateBandwidth : public NumericalError
  {
  public:
    using NumericalError::NumericalError;
  };

  class IllConditionedGram : public NumericalError
  {
  public:
    using NumericalError::NumericalError;
  };

  class NoLikelihoodSupport : public NumericalError
  {
  public:
    using NumericalError::NumericalError;
  };

  /// Malformed or inconsistent input files and archives.
  class DataError : public Error
  {
  public:
    using Error::Error;
  };

  class PairingMismatch : public DataError
  {
  public:
    PairingMismatch(std::size_t x_rows, std::size_t y_rows)
      : DataError("PairingMismatch(" + std::to_string(x_rows) + ","
                  + std::to_string(y_rows) + "): input and output files "
                  "must have the same number of rows"),
        x_rows_(x_rows), y_rows_(y_rows) {}

    std::size_t x_rows() const noexcept { return x_rows_; }
    std::size_t y_rows() const noexcept { return y_rows_; }

  private:
    std::size_t x_rows_;
    std::size_t y_rows_;
  };
}
