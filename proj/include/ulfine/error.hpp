#pragma once

#include <stdexcept>
#include <string>

namespace ulfine {

/// Bad user-facing configuration: unknown keys, unparsable values, missing files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incompatible binary/text input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between otherwise valid objects.
class DimensionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Truncated binary file.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Requested split cannot be drawn from the available pool.
class SupplyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf or a degenerate value in the numeric path.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ulfine
