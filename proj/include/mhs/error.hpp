#pragma once

#include <stdexcept>
#include <string>

namespace mhs {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class EmptyDocumentError : public Error {
 public:
  using Error::Error;
};

// Raised when training produces a non-finite loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mhs
