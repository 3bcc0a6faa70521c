/**
 * @file errors.hpp
 * @brief Exception types thrown by the collocation library.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace colloc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid sizes or shapes (basis dimension, quadrature counts, state layout).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A time or value lies outside the interval an object was built for.
class DomainError : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(int component, const std::string& what)
      : Error(what), component_(component) {}
  int component() const noexcept { return component_; }

 private:
  int component_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Analytic-versus-numeric consistency check failed.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class SamplerInitError : public Error {
 public:
  using Error::Error;
};

class SolverStepLimitError : public Error {
 public:
  SolverStepLimitError(double last_time, const std::string& what)
      : Error(what), last_time_(last_time) {}
  double last_time() const noexcept { return last_time_; }

 private:
  double last_time_;
};

/// Malformed or schema-violating configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data file; the message carries the line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace colloc
