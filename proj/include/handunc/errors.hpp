#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace handunc {

enum class ErrorCode {
  NonInvertiblePrecision,
  NotPositiveDefinite,
  EmptyBatch,
  ShapeError,
  TrainingDiverged,
  KinematicsError,
  EmptyInput,
  DegenerateConfiguration,
  InsufficientData,
  UndefinedCorrelation,
  InvalidArgument,
  IoError,
  ParseError,
  IncompatibleCheckpoint,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonInvertiblePrecision: return "NonInvertiblePrecision";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::KinematicsError: return "KinematicsError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::UndefinedCorrelation: return "UndefinedCorrelation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when training produces a non-finite loss.
class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(long iteration)
      : Error(ErrorCode::TrainingDiverged,
              "non-finite loss at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// Parse failure carrying the 1-based line number of the offending record.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace handunc
