#pragma once

#include <stdexcept>
#include <string>

namespace lot {

// Invalid configuration or precondition on a config value.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data (carries a line number in the message where applicable).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values encountered during computation.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Bad argument to an operation (length mismatch, empty input, ...).
struct ArgumentError : std::invalid_argument {
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Checkpoint load failures, distinguished by kind.
struct CheckpointError : std::runtime_error {
  enum class Kind { version_mismatch, shape_mismatch, truncated, corrupt };
  CheckpointError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

}  // namespace lot
