#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lis {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter set, simulation config or command-line input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed but violates a documented invariant.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Failure of the algebraic layer or of a derived diagnostic.
class SolveError : public Error {
 public:
  enum class Kind { NoBracket, NonFinite, Degenerate };
  SolveError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace lis
