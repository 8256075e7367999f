#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace ctxval {

/// Root of every error the library throws. The CLI maps subclasses onto exit
/// codes: ConfigError -> 2, GatewayError -> 3, DataError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, records, alignments).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A domain-type invariant does not hold. `field()` names the offending field.
class ValidationError : public DataError {
 public:
  ValidationError(std::string field, const std::string& what)
      : DataError(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Transport or endpoint failure while talking to a generator or embedder.
class GatewayError : public Error {
 public:
  explicit GatewayError(const std::string& what, int http_status = 0,
                        std::optional<double> retry_after_s = std::nullopt)
      : Error(what), http_status_(http_status), retry_after_s_(retry_after_s) {}

  int http_status() const noexcept { return http_status_; }
  std::optional<double> retry_after_s() const noexcept { return retry_after_s_; }

 private:
  int http_status_;
  std::optional<double> retry_after_s_;
};

/// The backend cannot score a forced continuation; callers should switch to a
/// metric-based utility.
class CapabilityUnsupported : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

}  // namespace ctxval
