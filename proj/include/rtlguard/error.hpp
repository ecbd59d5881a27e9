#pragma once

#include <stdexcept>
#include <string>

namespace rtlguard {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent user input (manifests, config files, arguments).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact failed to decode (bad magic, truncation, shape drift).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Vector/matrix dimensions disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training or inference.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage needs an artifact produced by an earlier stage.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(std::string stage, const std::string& what)
      : Error(what + " (produced by stage `" + stage + "`)"), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace rtlguard
