#pragma once

#include <stdexcept>
#include <string>

namespace infgen {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition (empty range, negative epsilon, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Solver or quadrature failed to reach the requested accuracy.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed velocity data; `field()` names the offending manifest key or array.
class IngestionError : public Error {
 public:
  IngestionError(std::string field, const std::string& what)
      : Error("ingestion error [" + field + "]: " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace infgen
