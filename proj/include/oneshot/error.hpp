#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oneshot {

/// Shapes that do not agree for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value outside the mathematical domain of an operation (log of 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// API misuse: wrong tape, wrong model variant, empty support set.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration detected before any compute.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV header lacks a required column.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A data cell that cannot be interpreted (label outside {0,1,empty}).
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t row)
      : std::runtime_error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace oneshot
