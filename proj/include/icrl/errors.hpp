#pragma once

#include <stdexcept>

namespace icrl {

// Invalid configuration or parameter bounds. The CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (length mismatch, bad architecture).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace icrl
