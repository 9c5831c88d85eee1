#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsml {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration (flags, config files, cfg structs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data or arguments that violate an operation's preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Raised when training produces non-finite values. `state` is a textual dump
// suitable for writing to a diagnostic file.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, std::string state)
      : Error(what), state_(std::move(state)) {}

  const std::string& state() const noexcept { return state_; }

 private:
  std::string state_;
};

}  // namespace gsml
