// SPDX-License-Identifier: Apache-2.0

#include "infill/gateway_http.hpp"

#include <httplib.h>

#include <set>
#include <thread>

namespace infill {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::SessionNotFound: return 404;
    case ErrorCode::TurnInProgress: return 409;
    case ErrorCode::AuthError: return 401;
    case ErrorCode::EmptyUtterance:
    case ErrorCode::InvalidConfig:
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::SchemaError: return 400;
    default: return 500;
  }
}

namespace {

std::string error_body(std::string_view code, std::string_view message) {
  Json j;
  j["error"] = {{"code", code}, {"message", message}};
  return j.dump();
}

void send_error(httplib::Response& res, const Error& e) {
  res.status = http_status(e.code());
  res.set_content(error_body(to_string(e.code()), e.what()), "application/json");
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, std::string("request body: ") + ex.what());
  }
}

}  // namespace

struct GatewayServer::Impl {
  SessionManager& sessions;
  HttpGatewayOptions options;
  httplib::Server server;
  std::thread thread;
  std::mutex streams_mutex;
  std::set<std::shared_ptr<Subscription>> streams;
  bool bound = false;

  Impl(SessionManager& s, HttpGatewayOptions o) : sessions(s), options(std::move(o)) {
    const auto threads = static_cast<std::size_t>(std::max(options.worker_threads, 2));
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    routes();
  }

  bool authorized(const httplib::Request& req, httplib::Response& res) const {
    if (options.token.empty()) return true;
    if (req.get_header_value("Authorization") == "Bearer " + options.token) return true;
    res.status = 401;
    res.set_content(error_body("AuthError", "missing or wrong bearer token"), "application/json");
    return false;
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(error_body("Internal", e.what()), "application/json");
      }
    };
  }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, Json{{"status", "ok"}, {"protocol_version", kProtocolVersion}});
    });

    server.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto body = parse_body(req);
                  auto overrides = body.is_object() && body.contains("overrides") ? body["overrides"] : Json::object();
                  auto created = sessions.create_session(overrides);
                  send_json(res, 201,
                            Json{{"session_id", created.id},
                                 {"protocol_version", kProtocolVersion},
                                 {"config", created.config}});
                }));

    server.Post(R"(/v1/sessions/([^/]+)/utterances)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  auto body = parse_body(req);
                  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
                    throw Error(ErrorCode::ParseError, "body must be {\"text\": string}");
                  }
                  auto turn = sessions.post_utterance(req.matches[1], body["text"].get<std::string>());
                  send_json(res, 202, Json{{"turn_index", turn}});
                }));

    server.Get(R"(/v1/sessions/([^/]+)/transcript)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, to_json(sessions.transcript(req.matches[1])));
               }));

    server.Get(R"(/v1/sessions/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 auto sub = sessions.subscribe(id);
                 const bool until_done = req.get_param_value("until") == "turn_done";
                 {
                   std::lock_guard lock(streams_mutex);
                   streams.insert(sub);
                 }
                 res.set_header("Cache-Control", "no-cache");
                 res.set_chunked_content_provider(
                     "application/x-ndjson",
                     [sub, id, until_done](std::size_t, httplib::DataSink& sink) {
                       auto frame = sub->next(std::chrono::milliseconds(200));
                       if (frame) {
                         auto line = to_json(*frame, id).dump() + "\n";
                         if (!sink.write(line.data(), line.size())) return false;
                         if (until_done && frame->kind == StreamKind::TurnDone) sink.done();
                         return true;
                       }
                       if (sub->closed()) {
                         sink.done();
                         return true;
                       }
                       return sink.is_writable();
                     },
                     [this, sub](bool) {
                       sub->close();
                       std::lock_guard lock(streams_mutex);
                       streams.erase(sub);
                     });
               }));

    if (!options.static_dir.empty() && !server.set_mount_point("/", options.static_dir)) {
      throw Error(ErrorCode::InvalidConfig, "static directory not found: " + options.static_dir);
    }
  }
};

GatewayServer::GatewayServer(SessionManager& sessions, HttpGatewayOptions options)
    : impl_(std::make_unique<Impl>(sessions, std::move(options))) {}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::bind(const std::string& host, int port) {
  int bound = 0;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else {
    bound = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (bound <= 0) throw Error(ErrorCode::NetworkError, "cannot listen on " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound;
}

void GatewayServer::serve() {
  if (!impl_->bound) throw Error(ErrorCode::NetworkError, "serve() before bind()");
  impl_->server.listen_after_bind();
}

void GatewayServer::start() {
  if (!impl_->bound) throw Error(ErrorCode::NetworkError, "start() before bind()");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void GatewayServer::stop() {
  {
    std::lock_guard lock(impl_->streams_mutex);
    for (const auto& s : impl_->streams) s->close();
  }
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace infill
