#pragma once

#include <stdexcept>
#include <string>

namespace svae {

// Contract violations on tensor/layer shapes. Messages name the offending
// dimension so callers can report something actionable.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad argument values (non-positive sigma, zero probability, invalid config).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// File could not be read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Byte-level format problems: bad magic, wrong version, truncated payload.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inputs that are individually valid but inconsistent with each other
// (checkpoint vs bitstream config, image dimension mismatches).
struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training-data problems, kept distinct so the CLI can map them to
// separate exit codes.
struct DatasetError : std::runtime_error {
  enum class Kind { Empty, UndersizedImage };
  DatasetError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

// Non-finite loss or diverged optimization.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace svae
