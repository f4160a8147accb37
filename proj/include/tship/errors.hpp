#pragma once

#include <stdexcept>
#include <string>

namespace tship {

/// Raised for malformed instance/study files and unsupported parameter combinations.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when a numerical input lies outside the domain of an operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace tship
