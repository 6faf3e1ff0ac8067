#pragma once

#include <stdexcept>

namespace headrouter {

// Caller errors derive from std::invalid_argument / std::logic_error;
// environment failures (I/O) from std::runtime_error.

/// Operand shapes are inconsistent.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A configuration value or document is invalid.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace headrouter
