#pragma once

#include <stdexcept>
#include <string>

namespace dear {

enum class ErrorCode {
  InvalidBandwidth,
  OverflowGuard,
  InvalidConfig,
  Sparsity,
  InvalidSample,
  InsufficientData,
  InsufficientHistory,
  LengthMismatch,
  Schema,
  EmptyDataset,
  UnstableModel,
  Numerical,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidBandwidth: return "invalid bandwidth";
    case ErrorCode::OverflowGuard: return "overflow guard";
    case ErrorCode::InvalidConfig: return "invalid config";
    case ErrorCode::Sparsity: return "sparsity";
    case ErrorCode::InvalidSample: return "invalid sample";
    case ErrorCode::InsufficientData: return "insufficient data";
    case ErrorCode::InsufficientHistory: return "insufficient history";
    case ErrorCode::LengthMismatch: return "length mismatch";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::EmptyDataset: return "empty dataset";
    case ErrorCode::UnstableModel: return "unstable model";
    case ErrorCode::Numerical: return "numerical failure";
    case ErrorCode::Io: return "i/o";
  }
  return "unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// recovery path (fallback, exit status) applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dear
