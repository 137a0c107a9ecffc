#pragma once

#include <stdexcept>
#include <string>

namespace tarstop {

/// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorKind {
  config,     ///< experiment configuration is invalid
  data,       ///< input data is malformed or inconsistent
  parameter,  ///< an argument is out of its documented range
  domain,     ///< a numeric kernel was called outside its domain
  io,         ///< filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Malformed input file; carries the 1-based line number.
struct ParseError : DataError {
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error(ErrorKind::parameter, what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace tarstop
