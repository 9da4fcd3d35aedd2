#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace wastesite {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or raster dimensions that do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Inputs that are well-formed but unusable (empty windows, single-class sets, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value surfaced during a forward pass or training step.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace wastesite
