#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmrft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precision matrix is not positive definite where it has to be.
class InfeasibleModel : public Error {
 public:
  using Error::Error;
};

class EigenFailure : public Error {
 public:
  using Error::Error;
};

/// Macroblock has zero variance after mean removal.
class DegenerateBlock : public Error {
 public:
  using Error::Error;
};

class NoFeasiblePoint : public Error {
 public:
  using Error::Error;
};

class EmptyTrainingSet : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or invalid text input. `line()` is 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace gmrft
