#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace igeood {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise malformed numeric input.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain (T <= 0, sigma <= 0, eps < 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An offline fitting routine could not produce a valid result.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Threshold calibration or metric evaluation was given unusable data.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration or command-line arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorCode : std::uint8_t {
  manifest_missing,
  manifest_parse,
  missing_field,
  wrong_type,
  unsupported_version,
  unsupported_dtype,
  invalid_dimension,
  file_missing,
  size_mismatch,
  label_out_of_range,
  invalid_path,
  io_failure,
};

const char* to_string(FormatErrorCode code);

/// Feature-dump or artifact file problem. `file()` names the offending file.
class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, std::string file, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + file + ": " + what),
        code_(code),
        file_(std::move(file)) {}

  FormatErrorCode code() const noexcept { return code_; }
  const std::string& file() const noexcept { return file_; }

 private:
  FormatErrorCode code_;
  std::string file_;
};

}  // namespace igeood
