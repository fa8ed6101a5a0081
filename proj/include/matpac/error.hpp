#pragma once

#include <stdexcept>
#include <string>

namespace matpac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Audio file could not be read or decoded.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree with the contract of an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on a scalar argument or on data content was violated.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration. `key_path` names the offending entry, e.g. "train.alpha".
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path.empty() ? what : key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// Checkpoint or array-container file is corrupt, truncated or from another version.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or other numerical breakdown during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace matpac
