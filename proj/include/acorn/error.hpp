#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace acorn {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A JSONL line that is not valid JSON.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("line " + std::to_string(line) + ": " + reason), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Valid JSON that violates the record schema or a type invariant.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& reason, std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : std::string()) +
              "field \"" + field + "\": " + reason),
        field_(std::move(field)),
        line_(line) {}
  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

/// Terminal failure talking to a remote service.
class ServiceError : public Error {
 public:
  ServiceError(const std::string& what, int status, int attempts)
      : Error(what + " (status " + std::to_string(status) + ", " +
              std::to_string(attempts) + " attempt" + (attempts == 1 ? "" : "s") + ")"),
        status_(status),
        attempts_(attempts) {}
  int status() const { return status_; }
  int attempts() const { return attempts_; }

  /// Same failure, message prefixed with e.g. the query it happened for.
  ServiceError with_context(const std::string& prefix) const {
    return ServiceError(Raw{}, prefix + ": " + what(), status_, attempts_);
  }

 private:
  struct Raw {};
  ServiceError(Raw, const std::string& message, int status, int attempts)
      : Error(message), status_(status), attempts_(attempts) {}

  int status_;
  int attempts_;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

/// Service answered, but not in the documented shape.
class MalformedResponse : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation precondition.
class BadInput : public Error {
 public:
  using Error::Error;
};

/// No fill candidate and no fallback answer could corrupt the document.
class NoValidCandidate : public Error {
 public:
  using Error::Error;
};

class EmptyCompletion : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Evaluation stopped because the failure rate crossed its threshold.
class RunAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace acorn
