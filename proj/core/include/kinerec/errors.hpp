#pragma once

#include <stdexcept>
#include <string>

namespace kinerec {

/// Bad inputs: malformed files, contract violations, out-of-range options.
/// Maps to process exit status 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& message) : std::runtime_error(message) {}
};

/// Numeric breakdown inside a solver or training loop (non-finite values,
/// divergence). Maps to process exit status 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace kinerec
