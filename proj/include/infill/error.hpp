// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace infill {

enum class ErrorCode {
  // protocol
  EmptyUtterance,
  ProtocolViolation,
  InvalidChunk,
  EmptyPhrase,
  ClosedTurn,
  UnbalancedTurn,
  // prompt format / dataset
  NotPending,
  SchemaError,
  AlignmentError,
  ParseError,
  ValidationError,
  GenerationError,
  UnknownDomain,
  // adapters
  BackendFailure,
  InfillFailure,
  NetworkError,
  AuthError,
  ProviderError,
  ClassifierUnavailable,
  // eval
  Timeout,
  ItemSetMismatch,
  // gateway / config
  SessionNotFound,
  TurnInProgress,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  /// Wraps a lower-level failure, e.g. BackendFailure caused by NetworkError.
  Error(ErrorCode code, const Error& cause)
      : std::runtime_error(std::string(to_string(code)) + "(" + cause.what() + ")"),
        code_(code),
        cause_(cause.code()) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<ErrorCode> cause() const noexcept { return cause_; }

 private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
};

}  // namespace infill
