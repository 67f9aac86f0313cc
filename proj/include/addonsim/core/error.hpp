#pragma once

#include <stdexcept>
#include <string>

namespace addonsim {

// Base of every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented precondition or type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Scenario / profile / cluster configuration is malformed. Messages carry key paths.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Referenced add-on id is not in the catalog.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// The simulation itself failed (watchdog, scheduling in the past, bad placement).
class SimulationError : public Error {
 public:
  using Error::Error;
};

// Trace or report file could not be parsed. Message lists offending lines.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace detail
}  // namespace addonsim
