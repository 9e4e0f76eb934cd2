#pragma once

#include <stdexcept>
#include <string>

namespace unbflow {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical invariant failed (descent inequality, unitarity, positivity,
/// eigensolver convergence). Always signals a bug or corrupted input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Input violates a precondition of the instance type (dimensions, kernels,
/// nonpositive coefficients, ...).
class InvalidInstance : public Error {
 public:
  using Error::Error;
};

/// The block structure could not be read off the iterate: cluster counts
/// disagree or the recovered blocks are inconsistent with the estimate.
class UnresolvedStructure : public Error {
 public:
  using Error::Error;
};

/// Malformed external input (JSON, CSV, CLI arguments).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace unbflow
