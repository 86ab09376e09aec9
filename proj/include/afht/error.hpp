#pragma once

#include <stdexcept>
#include <string>

namespace afht {

// Exit-code aligned categories shared by the C API and the CLI.
enum class ErrorKind {
  kParameter = 1,   // caller passed an invalid argument or flag value
  kValidation = 2,  // data, manifest, config or file content is invalid
  kNumeric = 3,     // non-finite values during computation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::kParameter, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

// Incompatible configuration, e.g. checkpoint geometry vs. dataset geometry.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

}  // namespace afht
