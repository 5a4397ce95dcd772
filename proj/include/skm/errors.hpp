#pragma once

#include <stdexcept>
#include <string>

namespace skm {

/// Caller violated an operation's contract (bad index, mismatched dimension).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization failed even after the allowed diagonal jitter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The truncated sampler could not find a starting point inside the selection set.
class InitializationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A tabulated density is too coarse to resolve the requested probability mass.
class ResolutionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Full-storage recursion refused because the joint would exceed the configured size cap.
class MemoryGuardError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field_path, const std::string& message)
      : std::runtime_error(field_path + ": " + message), field_path_(field_path) {}

  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace skm
