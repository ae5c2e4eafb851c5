#pragma once

#include <stdexcept>
#include <string>

namespace ntd {

// Tensor shapes or vector dimensions disagree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller violated an operation's precondition (non-scalar loss, t out of range, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid or inconsistent configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad input data: unknown token ids, unknown speakers, missing files.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file contents (WAV, checkpoint, config, script).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sequence longer than the model supports.
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

// Training diverged (non-finite loss or gradients).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ntd
