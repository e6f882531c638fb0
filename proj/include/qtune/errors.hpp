#pragma once

#include <stdexcept>
#include <string>

namespace qtune {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// space
class SchemaError : public Error {
 public:
  using Error::Error;
};
class InvariantError : public Error {
 public:
  InvariantError(std::string param, const std::string& what)
      : Error(what), param_(std::move(param)) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};
class UnclampableError : public Error {
 public:
  using Error::Error;
};

// hardware
class EmptyCandidateError : public Error {
 public:
  using Error::Error;
};
class MissingEntryError : public Error {
 public:
  using Error::Error;
};

// kerneltune
class InvalidConfigError : public Error {
 public:
  using Error::Error;
};

// prompt
class StaticTooLargeError : public Error {
 public:
  using Error::Error;
};

// agent
class TransportError : public Error {
 public:
  using Error::Error;
};
class CapacityError : public Error {
 public:
  using Error::Error;
};

// optimizers
class SingularModelError : public Error {
 public:
  using Error::Error;
};
class BudgetTooSmallError : public Error {
 public:
  using Error::Error;
};
class UnknownObjectiveError : public Error {
 public:
  using Error::Error;
};

// harness
class EvaluatorError : public Error {
 public:
  using Error::Error;
};
class TimeoutError : public EvaluatorError {
 public:
  using EvaluatorError::EvaluatorError;
};
class NonzeroExitError : public EvaluatorError {
 public:
  NonzeroExitError(int code, std::string stderr_tail, const std::string& what)
      : EvaluatorError(what), code_(code), stderr_tail_(std::move(stderr_tail)) {}
  int exit_code() const { return code_; }
  const std::string& stderr_tail() const { return stderr_tail_; }

 private:
  int code_;
  std::string stderr_tail_;
};
class MetricsParseError : public EvaluatorError {
 public:
  using EvaluatorError::EvaluatorError;
};
class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace qtune
