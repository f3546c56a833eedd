#pragma once

#include <stdexcept>
#include <string>

namespace ddfire {

/// A caller broke a documented precondition, or internal variance
/// bookkeeping went inconsistent. Maps to CLI exit code 1.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or inconsistent experiment configuration. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative numerical routine failed (CG divergence, quadrature that
/// would not converge after widening).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace ddfire
