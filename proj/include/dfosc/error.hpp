#pragma once

#include <stdexcept>
#include <string>

namespace dfosc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad user-supplied configuration: missing, extra or out-of-range values.
class ConfigError : public Error {
public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Syntax error in the line-oriented spec grammar.
class SyntaxError : public ConfigError {
public:
  SyntaxError(int line, int column, const std::string& what)
      : ConfigError("", "line " + std::to_string(line) + ", column " + std::to_string(column) +
                            ": " + what),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

private:
  int line_;
  int column_;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Tabulated nonlinearity queried outside its sample range.
class ExtrapolationError : public DomainError {
public:
  using DomainError::DomainError;
};

/// Division by a vanishing quantity (pole hit, zero describing function).
class SingularityError : public Error {
public:
  using Error::Error;
};

/// Operation not defined for the given kind of object.
class UnsupportedError : public Error {
public:
  using Error::Error;
};

/// Iterative numerics that failed to produce a usable answer.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Time integration failure; carries the simulation time where it happened.
class IntegrationError : public NumericalError {
public:
  IntegrationError(double t, const std::string& what)
      : NumericalError("t = " + std::to_string(t) + ": " + what), time_(t) {}
  double time() const noexcept { return time_; }

private:
  double time_;
};

}  // namespace dfosc
