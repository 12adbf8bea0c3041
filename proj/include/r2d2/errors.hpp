#pragma once

#include <stdexcept>
#include <string>

namespace r2d2 {

/// Malformed or inconsistent input (shapes, ranges, file contents).
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or unparseable configuration.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// A 2x2 tile neighbourhood was requested where none exists.
class NoQuadError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Non-finite loss or gradient during optimisation.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A generated training set violates its configured class balance.
class DatasetFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tile was scheduled before one of its upstream neighbours was published.
class DependencyViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace r2d2
