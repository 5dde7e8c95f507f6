#pragma once

#include <stdexcept>
#include <string>

namespace nplcm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed inputs: bad configs, dimension mismatches, unknown columns.
/// The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Data that no parameter value can explain (e.g. SS positives on items that
/// are non-causative under every class).
class DataInconsistency : public Error {
 public:
  using Error::Error;
};

/// Iterative numerics that failed to reach tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace nplcm
