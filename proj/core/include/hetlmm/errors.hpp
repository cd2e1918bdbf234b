#pragma once

#include <stdexcept>
#include <string>

namespace hetlmm {

/// Malformed or inconsistent input data (bad files, shapes, indices).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a trustworthy answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The de-biasing denominator collapsed: the target direction is not
/// identified by the projection residuals.
class UnidentifiedDirection : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace hetlmm
