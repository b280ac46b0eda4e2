#pragma once

#include <stdexcept>
#include <string>

namespace fedmix {

// Error taxonomy. The CLI maps each type to a stable "E_*:" line prefix and a
// distinct nonzero exit code; see tools/fedmix_main.cpp.

// A caller broke an API precondition (mismatched lengths, bad layout, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input is structurally fine but mathematically unusable (all-zero target, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A computation produced a non-finite or otherwise invalid numeric result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad experiment configuration (detected before any training work starts).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be read or has the wrong format.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace fedmix
