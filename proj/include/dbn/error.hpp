#pragma once

#include <stdexcept>
#include <string>

namespace dbn {

// Failure categories map one-to-one onto CLI exit codes.
enum class ErrorKind { usage = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Invalid configuration, shape mismatch, or bad command-line parameters.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Malformed or missing input files, version mismatches.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Non-finite values encountered during training or evaluation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

/// A caller broke an operation's precondition (t = 0 in the loss, s >= t, ...).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// A tape recorded against parameters that have since changed.
class InvalidTape : public Error {
 public:
  explicit InvalidTape(const std::string& what) : Error(ErrorKind::usage, what) {}
};

}  // namespace dbn
