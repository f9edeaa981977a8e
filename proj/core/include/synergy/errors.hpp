#pragma once

#include <stdexcept>
#include <string>

namespace synergy {

// Dimension / structural mismatch between tensors, networks or buffers.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Operation applied in an invalid state (consumed tape, missing gradients, ...).
struct StateError : std::logic_error {
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

// Index (e.g. class label) outside its valid range.
struct IndexError : std::out_of_range {
  explicit IndexError(const std::string& what) : std::out_of_range(what) {}
};

// Malformed on-disk data (IDX files, checkpoints, buffer dumps).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration or argument values.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Semantically invalid runtime input (e.g. non-normalized probability rows).
struct ValidationError : std::invalid_argument {
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace synergy
