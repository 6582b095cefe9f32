#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace macstab {

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A combinatorial quantity (schedule count, subset count) exceeds the
/// configured hard cap. Carries the offending count.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, double count)
      : std::runtime_error(what), count_(count) {}

  double count() const noexcept { return count_; }

 private:
  double count_;
};

/// Configuration rejected during validation. `path` names the offending
/// field, e.g. "system.service_classes[1].error_prob".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// The LP solver failed to reach an optimal basis.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace macstab
