#pragma once

#include <stdexcept>
#include <string>

namespace botfuse {

enum class ErrorCode {
  FileNotFound,
  EmptyAfterParse,
  UnknownFormat,
  InvalidArgument,
  EmptyWindow,
  MissingFeatures,
  DimensionMismatch,
  NonFiniteValue,
  FrozenModel,
  EmptyMask,
  VersionMismatch,
  CorruptPayload,
  ConfigMismatch,
  InfeasibleTopology,
  SingleClass,
  Divergence,
  SchemaViolation,
  MissingLabels,
  TooFewSamples,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "file-not-found";
    case ErrorCode::EmptyAfterParse: return "empty-after-parse";
    case ErrorCode::UnknownFormat: return "unknown-format";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::EmptyWindow: return "empty-window";
    case ErrorCode::MissingFeatures: return "missing-features";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NonFiniteValue: return "non-finite-value";
    case ErrorCode::FrozenModel: return "frozen-model";
    case ErrorCode::EmptyMask: return "empty-mask";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::CorruptPayload: return "corrupt-payload";
    case ErrorCode::ConfigMismatch: return "config-mismatch";
    case ErrorCode::InfeasibleTopology: return "infeasible-topology";
    case ErrorCode::SingleClass: return "single-class";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::SchemaViolation: return "schema-violation";
    case ErrorCode::MissingLabels: return "missing-labels";
    case ErrorCode::TooFewSamples: return "too-few-samples";
    case ErrorCode::IoError: return "io-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace botfuse
