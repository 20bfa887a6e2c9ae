#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ecml {

// Base of every error raised by the library. The message can be prefixed
// with location context (stage, group) while the exception propagates, so
// catch by reference, call prepend(), then rethrow with `throw;`.
class Error : public std::exception {
 public:
  explicit Error(std::string msg) : msg_(std::move(msg)) {}
  const char* what() const noexcept override { return msg_.c_str(); }
  void prepend(const std::string& ctx) { msg_ = ctx + ": " + msg_; }

 private:
  std::string msg_;
};

// Bad input: preconditions, shapes, out-of-range indices, bad configs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Numerical breakdown: failed factorization, degenerate statistics.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A covariance that cannot be inverted reliably (not positive definite, or
// condition number above the limit). KISSME and the genuine-pair baseline
// raise this; RMML never does.
class SingularCovariance : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ecml
