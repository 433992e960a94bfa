#pragma once

#include <stdexcept>
#include <string>

namespace ntd {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (bad JSON, missing key, wrong shape).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Matrix is singular to working tolerance.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Iterative eigen solver exceeded its sweep budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside the regime where it is defined
/// (e.g. a Lyapunov solve on a non-Hurwitz matrix).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace ntd
