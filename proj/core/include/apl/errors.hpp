#pragma once

#include <stdexcept>
#include <string>

namespace apl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable category, e.g. "invalid-input".
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidInput : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid-input"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

/// Configuration validation failure; carries the dotted path of the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
};

class OracleUnavailable : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "oracle-unavailable"; }
};

/// The judge answered but no preference could be extracted. raw() holds the reply.
class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& message, std::string raw);
  const std::string& raw() const noexcept { return raw_; }
  const char* kind() const noexcept override { return "parse-failure"; }

 private:
  std::string raw_;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "integrity"; }
};

class IncompatibleVersion : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "incompatible-version"; }
};

class Cancelled : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "cancelled"; }
};

/// Raised when an operation is attempted on a run that has used its whole budget.
class RunFinished : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "run-finished"; }
};

}  // namespace apl
