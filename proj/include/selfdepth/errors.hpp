#pragma once

#include <stdexcept>
#include <string>

namespace selfdepth {

/// Shape or rank mismatch beyond the supported broadcasting rules.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input value outside the documented domain of an operation.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Evaluation produced a non-finite value or had no valid data to work on.
struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or missing run-configuration key.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Checkpoint missing, corrupt, or incompatible with the configured architecture.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Negative mining could not produce admissible samples.
struct MiningError : std::runtime_error {
  explicit MiningError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss or other numeric failure during training.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace selfdepth
