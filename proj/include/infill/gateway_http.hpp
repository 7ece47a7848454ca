// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "infill/error.hpp"
#include "infill/gateway.hpp"

namespace infill {

struct HttpGatewayOptions {
  /// Shared bearer token required on /v1 routes when non-empty.
  std::string token;
  /// Directory served at "/" (the browser client build), when non-empty.
  std::string static_dir;
  int worker_threads = 32;
};

/// HTTP front end for a SessionManager:
///   POST /v1/sessions                    {"overrides": {dotted key: value}}
///   POST /v1/sessions/{id}/utterances    {"text": str}
///   GET  /v1/sessions/{id}/events        NDJSON frames; ?until=turn_done ends
///                                        the stream after the next turn_done
///   GET  /v1/sessions/{id}/transcript
///   GET  /healthz
/// Errors are {"error": {"code": str, "message": str}}.
class GatewayServer {
 public:
  GatewayServer(SessionManager& sessions, HttpGatewayOptions options);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  /// Throws NetworkError.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void serve();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status used for an error code.
int http_status(ErrorCode code);

}  // namespace infill
