#pragma once

#include <stdexcept>
#include <string>

namespace collsim {

/// Base class for all errors raised by the simulator. `kind_name()` is the
/// stable class name used in metrics files and exit diagnostics.
class Error : public std::runtime_error {
 public:
  enum class Kind { Config, Usage, Mismatch, DeadlockTimeout, Engine };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }

  const char* kind_name() const {
    switch (kind_) {
      case Kind::Config: return "ConfigError";
      case Kind::Usage: return "UsageError";
      case Kind::Mismatch: return "MismatchError";
      case Kind::DeadlockTimeout: return "DeadlockTimeout";
      case Kind::Engine: return "EngineError";
    }
    return "Error";
  }

 private:
  Kind kind_;
};

/// Invalid run or store configuration (bad sizes, nonpositive watchdog, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(Kind::Config, msg) {}
};

/// API contract violation (pull before push, push after shutdown, ...).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(Kind::Usage, msg) {}
};

/// Ranks disagreed on the signature of the k-th collective call on a
/// communicator.
class MismatchError : public Error {
 public:
  explicit MismatchError(const std::string& msg) : Error(Kind::Mismatch, msg) {}
};

/// A collective rendezvous did not complete within the watchdog window.
class DeadlockTimeout : public Error {
 public:
  explicit DeadlockTimeout(const std::string& msg) : Error(Kind::DeadlockTimeout, msg) {}
};

/// A task body failed inside the engine; reported by wait_all.
class EngineError : public Error {
 public:
  explicit EngineError(const std::string& msg) : Error(Kind::Engine, msg) {}
};

}  // namespace collsim
