#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iopcal {

enum class ErrorKind {
  invalid_input,
  invalid_parameter,
  invalid_config,
  contract_violation,
  training_diverged,
  parse,
  format,
  unsupported_version,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the optimizer when the objective stops being finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t iteration, const std::string& message)
      : Error(ErrorKind::training_diverged, message), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Parse failures carry the 1-based line they occurred on (0 when unknown).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace iopcal
