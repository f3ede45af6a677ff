#pragma once

#include <stdexcept>
#include <string>

namespace apl {

// Raised when an operation receives values it cannot compute on
// (degenerate inputs, dimension mismatches, invalid configuration).
class ComputeError : public std::runtime_error {
 public:
  explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

// Raised on file, format, or configuration-file problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace apl
