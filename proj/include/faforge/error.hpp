#pragma once
//===----------------------------------------------------------------------===//
// Error model. Every throwing surface in the library raises faforge::Error
// with a stable code; messages carry the offending name/location so callers
// (CLI, repair loops) can surface them verbatim.
//===----------------------------------------------------------------------===//

#include <stdexcept>
#include <string>

namespace faforge {

enum class ErrorCode {
  // construction / parsing
  DuplicateId,
  MalformedParams,
  UnknownId,
  WouldCreateCycle,
  ParseError,
  SchemaViolation,
  // IR / planning
  UnknownIntent,
  UnknownFeature,
  ArityError,
  NoTemplate,
  SchemaMismatch,
  UnresolvedReference,
  // crypto / numerics
  OutOfRange,
  Overflow,
  DivisionByZero,
  FingerprintMismatch,
  NonpositiveScale,
  // data ingestion
  MissingColumn,
  CoercionError,
  EmptyPool,
  EmptyGroup,
  EmptyInput,
  UnboundName,
  UnknownFormat,
  // backends
  BackendUnavailable,
  Unrepairable,
  // catch-all for misuse of the API surface
  InvalidArgument,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::DuplicateId: return "duplicate-id";
    case ErrorCode::MalformedParams: return "malformed-params";
    case ErrorCode::UnknownId: return "unknown-id";
    case ErrorCode::WouldCreateCycle: return "would-create-cycle";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::SchemaViolation: return "schema-violation";
    case ErrorCode::UnknownIntent: return "unknown-intent";
    case ErrorCode::UnknownFeature: return "unknown-feature";
    case ErrorCode::ArityError: return "arity-error";
    case ErrorCode::NoTemplate: return "no-template";
    case ErrorCode::SchemaMismatch: return "schema-mismatch";
    case ErrorCode::UnresolvedReference: return "unresolved-reference";
    case ErrorCode::OutOfRange: return "out-of-range";
    case ErrorCode::Overflow: return "overflow";
    case ErrorCode::DivisionByZero: return "division-by-zero";
    case ErrorCode::FingerprintMismatch: return "fingerprint-mismatch";
    case ErrorCode::NonpositiveScale: return "nonpositive-scale";
    case ErrorCode::MissingColumn: return "missing-column";
    case ErrorCode::CoercionError: return "coercion-error";
    case ErrorCode::EmptyPool: return "empty-pool";
    case ErrorCode::EmptyGroup: return "empty-group";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::UnboundName: return "unbound-name";
    case ErrorCode::UnknownFormat: return "unknown-format";
    case ErrorCode::BackendUnavailable: return "backend-unavailable";
    case ErrorCode::Unrepairable: return "unrepairable";
    case ErrorCode::InvalidArgument: return "invalid-argument";
  }
  return "unknown-error";
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace faforge
