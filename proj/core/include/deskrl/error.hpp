#pragma once

#include <stdexcept>

namespace deskrl {

// Bad arguments to a kernel, or a domain object that violates its invariants.
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad or inconsistent run configuration: files, schemas, value ranges.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An exact-enumeration request whose state space exceeds the allowed budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values showed up where the math does not allow them.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deskrl
