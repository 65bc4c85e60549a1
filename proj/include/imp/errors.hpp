#pragma once

#include <stdexcept>
#include <string>

namespace imp {

// Base of every error raised by the library. Callers that only care about
// "something in the model went wrong" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside its admissible range (rate index, horizon, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

// Input violates a mathematical precondition (belief off the simplex,
// negative multiplier, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Observation with zero likelihood under the current belief. Signals a
// mismatch between simulator and filter, never renormalized away.
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

// Episode bookkeeping misuse, e.g. stepping past the horizon.
class LifecycleError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration or checkpoint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Exhaustive computation requested on an instance that is too large.
class SizeError : public Error {
 public:
  using Error::Error;
};

}  // namespace imp
