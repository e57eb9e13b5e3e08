#pragma once

#include <stdexcept>
#include <string>

namespace gbip {

/// Invalid input or configuration. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A point or argument that lies outside the domain of an operation.
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Covariance with a zero-variance mode where a strictly positive one is required.
class DegenerateCovarianceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical failure (eigensolver residual, non-PSD factorization, ...).
/// The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gbip
