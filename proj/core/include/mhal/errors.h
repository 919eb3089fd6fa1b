#pragma once

#include <stdexcept>
#include <string>

namespace mhal {

// Bad tensor shapes or misused engine primitives.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed configuration (config files, label schemes, presets).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or missing input data (corpus files, embeddings, checkpoints).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (diverged training).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mhal
