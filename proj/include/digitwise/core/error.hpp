#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace digitwise {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable stream/file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (bad hyperparameters, unknown format tag, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input does not match the expected columns or field names.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Lookup of a named entity (user, trace, feature) that does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// The single "missing" encoding for optional numeric values. Tree learners
// route it to a learned default branch.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

}  // namespace digitwise
