#pragma once

#include <stdexcept>
#include <string>

namespace gii {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed user input: bad dimensions, out-of-range settings, bad config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a meaningful answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A structural parameter vector lies outside the configured box.
class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

/// The auxiliary regression for one block has a singular Gram matrix or a
/// non-positive-definite residual covariance.
class DegenerateDesignError : public NumericalError {
 public:
  DegenerateDesignError(int block, const std::string& what)
      : NumericalError("degenerate auxiliary design in block " +
                       std::to_string(block) + ": " + what),
        block_(block) {}

  int block() const noexcept { return block_; }

 private:
  int block_;
};

}  // namespace gii
