// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hpe {

/// Base of every error raised by the toolkit. `module()` names the component
/// that detected the failure so operator-facing messages can point at it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Input that violates a documented precondition (maps to CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Annotation file is missing a required column or has unparsable rows.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Checkpoint or pseudo-label file is corrupt, truncated or incompatible.
class LoadError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised by the training loops when a batch produces a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace hpe
