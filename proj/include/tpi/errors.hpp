#pragma once

#include <stdexcept>
#include <string>

namespace tpi {

/// Broad failure classes. Each maps onto one CLI exit code.
enum class ErrorKind {
  invalid_argument,  // caller passed something outside an operation's domain
  config,            // configuration text could not be parsed or validated
  fit,               // a fit did not converge or the data cannot identify a parameter
  invariant,         // an internal consistency check failed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::invalid_argument, what) {}
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(ErrorKind::config, line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  /// 1-based line number of the offending input, 0 when not tied to a line.
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& what) : Error(ErrorKind::fit, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

/// Process exit code for an error class: 2 config, 3 fit, 4 invariant.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument:
      return 2;
    case ErrorKind::fit:
      return 3;
    case ErrorKind::invariant:
      return 4;
  }
  return 4;
}

}  // namespace tpi
