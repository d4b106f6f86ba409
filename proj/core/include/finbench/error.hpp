#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace finbench {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a panel invariant or cannot be parsed.
class DataError : public Error {
 public:
  using Error::Error;
};

// Configuration is missing a field or carries an out-of-range value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A numerical routine cannot produce a defined result (rank deficiency,
// zero variance, divergence).
class NumericError : public Error {
 public:
  using Error::Error;
};

// An archive on disk does not match the expected layout or schema version.
class ArchiveError : public Error {
 public:
  using Error::Error;
};

// Non-fatal conditions collected while an operation runs.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
  bool empty() const noexcept { return warnings.empty(); }
};

}  // namespace finbench
