#pragma once
#include <stdexcept>
#include <string>

namespace tfe {

// Invalid caller-supplied value (out-of-range heading, bad rate, ...).
struct ValidationError : std::invalid_argument {
  explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Tensor extents do not line up for the requested operation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// An API contract was broken (non-scalar loss, empty mask, consumed graph).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required time slot is missing from a sequence.
struct SequencingError : std::runtime_error {
  explicit SequencingError(const std::string& msg) : std::runtime_error(msg) {}
};

// A file could not be parsed: bad magic, version, truncation, malformed line.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tfe
