// SPDX-License-Identifier: Apache-2.0

#include "infill/error.hpp"

namespace infill {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyUtterance: return "EmptyUtterance";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::InvalidChunk: return "InvalidChunk";
    case ErrorCode::EmptyPhrase: return "EmptyPhrase";
    case ErrorCode::ClosedTurn: return "ClosedTurn";
    case ErrorCode::UnbalancedTurn: return "UnbalancedTurn";
    case ErrorCode::NotPending: return "NotPending";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::GenerationError: return "GenerationError";
    case ErrorCode::UnknownDomain: return "UnknownDomain";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::InfillFailure: return "InfillFailure";
    case ErrorCode::NetworkError: return "NetworkError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::ClassifierUnavailable: return "ClassifierUnavailable";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ItemSetMismatch: return "ItemSetMismatch";
    case ErrorCode::SessionNotFound: return "SessionNotFound";
    case ErrorCode::TurnInProgress: return "TurnInProgress";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace infill
