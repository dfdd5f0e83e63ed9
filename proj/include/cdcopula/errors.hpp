#pragma once

#include <stdexcept>
#include <string>

namespace cdcopula {

// Argument outside the mathematical domain of a function (poles included).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// (lambda_L, tau) pair outside the attainable Joe-Clayton region.
class InfeasibleError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Iterative routine failed to converge or produced non-finite output.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cdcopula
