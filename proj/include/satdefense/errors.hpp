#pragma once

#include <stdexcept>
#include <string>

namespace satdefense {

// Malformed file contents (bad magic, truncated records, unsupported version).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two operands whose dimensions must agree do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Precondition violation on a scalar argument.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace satdefense
