#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dwr {

// Every library error carries a short machine-readable reason code
// (e.g. "dwell-without-click", "missing-input:profiles") next to the
// human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string reason, const std::string& message)
      : std::runtime_error(message), reason_(std::move(reason)) {}

  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

// Bad input or configuration; the CLI maps these to exit status 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A failure while doing work on valid inputs; exit status 2.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::string reason, std::size_t line, const std::string& detail)
      : ValidationError(std::move(reason),
                        "line " + std::to_string(line) + ": " + detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace dwr
