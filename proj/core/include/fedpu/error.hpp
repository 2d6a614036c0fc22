#pragma once

#include <stdexcept>
#include <string>

namespace fedpu {

// Process exit codes used by the command-line runner.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

// Invalid configuration, argument, or an infeasible partition request.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

class InfeasibleError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Malformed dataset or checkpoint file (bad magic, bad record length).
class FormatError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

// Files that parse individually but disagree with each other or are truncated.
class ConsistencyError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Non-finite values, shape mismatches inside numeric kernels.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

class ShapeError : public NumericError {
 public:
  using NumericError::NumericError;
};


}  // namespace fedpu
