#ifndef JUMPY_ERRORS_H_
#define JUMPY_ERRORS_H_

#include <stdexcept>
#include <string>

namespace jumpy {

// Operand dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the operation's domain (bad enum, empty input, K > T...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN/Inf produced or consumed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an API contract (e.g. backward from a non-scalar node).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// File I/O or on-disk format failure.
class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or incomplete run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jumpy

#endif  // JUMPY_ERRORS_H_
