#pragma once

#include <stdexcept>
#include <string>

namespace lvba {

/// Base of all library errors. exit_code() maps the error class onto the
/// CLI's process exit status.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

class InvalidArgument : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class DatasetError : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

class MissingFileError : public DatasetError {
public:
  using DatasetError::DatasetError;
};

class TimestampOrderError : public DatasetError {
public:
  using DatasetError::DatasetError;
};

class CountMismatchError : public DatasetError {
public:
  using DatasetError::DatasetError;
};

class IoError : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

class OptimizationError : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 5; }
};

/// A pipeline stage failed; carries the stage name for diagnostics.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const override { return 6; }

private:
  std::string stage_;
};

}  // namespace lvba
