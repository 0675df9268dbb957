#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ontonorm {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or flag combination. Aborts batch runs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed structured input. line() is the 1-based physical line where the
// offending record starts, or 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InvalidIdError : public Error {
 public:
  explicit InvalidIdError(std::string raw)
      : Error("invalid HPO identifier: '" + raw + "'"), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Embedding file rejected. row() is the 1-based data row (0 = header/file).
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::size_t row)
      : Error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Network or remote-service failure. retryable() distinguishes transient
// failures (timeouts, 429, 5xx) from permanent ones.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool retryable, int status = 0)
      : Error(what), retryable_(retryable), status_(status) {}
  bool retryable() const noexcept { return retryable_; }
  int status() const noexcept { return status_; }

 private:
  bool retryable_;
  int status_;
};

class AuthError : public TransportError {
 public:
  explicit AuthError(const std::string& what, int status = 401)
      : TransportError(what, false, status) {}
};

class QuotaError : public TransportError {
 public:
  explicit QuotaError(const std::string& what, int status = 429)
      : TransportError(what, false, status) {}
};

// Embedding provider failed to deliver usable vectors.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class JudgeError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

}  // namespace ontonorm
