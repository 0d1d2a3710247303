#pragma once

#include <stdexcept>
#include <string>

namespace vodsim {

// Invalid run configuration. The message names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Argument outside the domain of a formula (zero rate, C_i > F_i, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Not enough evictable blocks to satisfy an eviction request.
class CacheFullError : public std::runtime_error {
 public:
  explicit CacheFullError(const std::string& what) : std::runtime_error(what) {}
};

// Precondition of a stateful operation violated (e.g. second open batch).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace vodsim
