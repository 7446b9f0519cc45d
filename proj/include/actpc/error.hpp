#pragma once

#include <stdexcept>
#include <string>

namespace actpc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration: bad dimensions, unknown keys, invalid parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain an operation is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numeric update produced non-finite values.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration, int layer)
      : Error(what), iteration_(iteration), layer_(layer) {}
  int iteration() const { return iteration_; }
  int layer() const { return layer_; }

 private:
  int iteration_;
  int layer_;
};

/// A linear solve failed; carries an estimate of the condition number.
class SolveError : public Error {
 public:
  SolveError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition_estimate() const { return condition_; }

 private:
  double condition_;
};

}  // namespace actpc
