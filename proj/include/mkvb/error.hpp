#pragma once

#include <stdexcept>
#include <string>

namespace mkvb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, malformed input or inconsistent shapes.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Coefficient evaluation outside its declared bounds.
class BoundViolation : public Error {
 public:
  using Error::Error;
};

/// Total-ever-alive population exceeded the configured guard.
class ExplosionError : public Error {
 public:
  using Error::Error;
};

/// Malformed run configuration. `key` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace mkvb
