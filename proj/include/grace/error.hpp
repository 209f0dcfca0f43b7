#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace grace {

// Bad shapes or arguments passed to a library routine.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (dataset lines, fixture files,
// checkpoints, manifests).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Invalid configuration value or unknown configuration key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A metric is undefined for its input (e.g. AUC over a single class).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace grace
