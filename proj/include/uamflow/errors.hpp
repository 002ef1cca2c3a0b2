#pragma once

#include <stdexcept>
#include <string>

namespace uamflow {

// Base of every error raised by the library. Each subclass maps to one
// failure category so callers (and the CLI exit codes) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidCoordinate : public Error {
 public:
  using Error::Error;
};

class UnsupportedRegion : public Error {
 public:
  using Error::Error;
};

class UndefinedBearing : public Error {
 public:
  using Error::Error;
};

class MalformedInput : public Error {
 public:
  using Error::Error;
};

class DegenerateNormalization : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericOverflow : public Error {
 public:
  using Error::Error;
};

class InsufficientHistory : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised when training produces a non-finite loss. Carries the index of the
// last epoch whose validation score was finite (-1 if none).
class DivergedTraining : public Error {
 public:
  DivergedTraining(const std::string& what, int last_finite_epoch)
      : Error(what), last_finite_epoch_(last_finite_epoch) {}

  int last_finite_epoch() const noexcept { return last_finite_epoch_; }

 private:
  int last_finite_epoch_;
};

}  // namespace uamflow
