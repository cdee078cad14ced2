#pragma once

#include <stdexcept>
#include <string>

namespace metapac {

// Invalid argument or parameter outside the admissible region.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Non-finite intermediate values where finite ones were required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a KL value is infinite but a finite number was requested.
struct DivergenceInfinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Unsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& msg, int line = -1)
      : std::runtime_error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg), line(line) {}
  int line;
};

}  // namespace metapac
