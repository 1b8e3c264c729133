#pragma once

#include <stdexcept>
#include <string>

namespace auxvae {

// Base of every exception thrown by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy an operation's rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument, configuration value or usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required, or a diverged training run.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File missing, unreadable or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace auxvae
