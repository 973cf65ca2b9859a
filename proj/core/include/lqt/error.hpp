#pragma once

#include <stdexcept>
#include <string>

namespace lqt {

// Invalid shapes, dimension mismatches, bad operator arguments.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf surfaced by an engine operation, gradcheck failures, diverged losses.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format violations, missing files, short reads.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-facing configuration (unknown keys, invalid values, protocol violations).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lqt
