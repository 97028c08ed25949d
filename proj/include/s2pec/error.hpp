#pragma once

#include <stdexcept>
#include <string>

namespace s2pec {

// Error categories map onto process exit codes in the CLI:
// input -> 1, config -> 2, everything else -> 3.

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated operation precondition (shape mismatch between tensors, etc.).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by training when a loss becomes non-finite.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace s2pec
