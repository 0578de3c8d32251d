#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace redit {

enum class ErrorCode {
  kInvalidArgument,
  kEmptyInput,
  kParseError,
  kDuplicateId,
  kBlankDocument,
  kAuthError,
  kRateLimited,
  kTransportError,
  kEmptyCompletion,
  kSchemaMismatch,
  kDegenerateLabels,
  kNonFiniteLoss,
  kVersionMismatch,
  kStratumTooSmall,
  kOverlapDetected,
  kMissingVariant,
  kInsufficientData,
  kZeroVariance,
  kConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kBlankDocument: return "BlankDocument";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kEmptyCompletion: return "EmptyCompletion";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kStratumTooSmall: return "StratumTooSmall";
    case ErrorCode::kOverlapDetected: return "OverlapDetected";
    case ErrorCode::kMissingVariant: return "MissingVariant";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure surfaced by the library. The code is what callers branch on;
/// the message carries the context (record line, document id, prompt id, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Same code, message prefixed with extra context.
  Error with_context(const std::string& context) const {
    std::string msg = what();
    const auto colon = msg.find(": ");
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    return Error(code_, context + ": " + msg);
  }

 private:
  ErrorCode code_;
};

}  // namespace redit
