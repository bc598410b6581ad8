#pragma once

#include <stdexcept>
#include <string>

namespace vecchia {

// Bad arguments, shapes, or configuration.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A problem size exceeds a configured cap.
class SizeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Numerical failure (bracket failure, singular solve, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cholesky-type factorization hit a non-positive pivot.
class NotPositiveDefiniteError : public NumericError {
 public:
  NotPositiveDefiniteError(const std::string& what, int pivot)
      : NumericError(what), pivot_(pivot) {}
  // Index (in the matrix's own ordering) of the failing pivot.
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

}  // namespace vecchia
