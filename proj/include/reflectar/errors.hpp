#pragma once

#include <stdexcept>
#include <string>

namespace reflectar {

/// Base for everything the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PoleProximityError : Error { using Error::Error; };
struct UnsupportedError : Error { using Error::Error; };
struct QuadratureError : Error { using Error::Error; };

/// Truncation or iteration budget exhausted before the tail bound was met.
struct NonConvergenceError : Error { using Error::Error; };

/// Linear system for the unknown constants is singular or cond > 1e12.
struct IllConditionedError : Error { using Error::Error; };

struct DegenerateError : Error { using Error::Error; };

/// Invalid model parameters or configuration. `key` names the culprit.
struct ConfigError : Error {
  std::string key;
  ConfigError(std::string k, const std::string& msg)
      : Error(k.empty() ? msg : k + ": " + msg), key(std::move(k)) {}
};

}  // namespace reflectar
