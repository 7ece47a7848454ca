// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <cstdlib>

#include "infill/adapters.hpp"
#include "infill/error.hpp"
#include "infill/json_io.hpp"
#include "infill/prompt_format.hpp"

namespace infill {

namespace {

void set_timeouts(httplib::Client& client, double seconds) {
  const auto usec = static_cast<long>(seconds * 1e6);
  client.set_connection_timeout(std::min(usec, 10'000'000L) / 1'000'000, std::min(usec, 10'000'000L) % 1'000'000);
  client.set_read_timeout(usec / 1'000'000, usec % 1'000'000);
  client.set_write_timeout(usec / 1'000'000, usec % 1'000'000);
}

Error classify_status(int status, const std::string& body) {
  auto message = "HTTP " + std::to_string(status) + ": " + body.substr(0, 200);
  if (status == 401 || status == 403) return Error(ErrorCode::AuthError, message);
  return Error(ErrorCode::ProviderError, message);
}

/// Incremental parser for `data:` lines of a server-sent event stream.
class SseLines {
 public:
  template <typename OnData>
  void feed(std::string_view bytes, OnData&& on_data) {
    buffer_.append(bytes);
    std::size_t pos;
    while ((pos = buffer_.find('\n')) != std::string::npos) {
      auto line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind("data:", 0) == 0) on_data(trim(std::string_view(line).substr(5)));
    }
  }

 private:
  std::string buffer_;
};

class HttpStream final : public BackendStream {
 public:
  HttpStream(HttpBackendConfig config, std::string body, KnowledgeQueue& queue, Clock& clock)
      : thread_([this, config = std::move(config), body = std::move(body), &queue, &clock] {
          run(config, body, queue, clock);
        }) {}

  ~HttpStream() override {
    cancel();
    thread_.join();
  }

  void cancel() override { cancelled_ = true; }

 private:
  void run(const HttpBackendConfig& config, const std::string& body, KnowledgeQueue& queue, Clock& clock) {
    try {
      stream(config, body, queue, clock);
    } catch (const Error& e) {
      queue.close(clock.now(), Error(ErrorCode::BackendFailure, e));
    } catch (const std::exception& e) {
      queue.close(clock.now(), Error(ErrorCode::BackendFailure, Error(ErrorCode::ProviderError, e.what())));
    }
  }

  void stream(const HttpBackendConfig& config, const std::string& body, KnowledgeQueue& queue, Clock& clock) {
    auto url = parse_url(config.url);
    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
      const char* key = std::getenv(config.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw Error(ErrorCode::AuthError, "environment variable " + config.api_key_env + " is not set");
      }
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    httplib::Client client(url.scheme_host_port);
    set_timeouts(client, config.timeout_seconds);

    SentenceSegmenter segmenter;
    SseLines sse;
    int status = 0;
    std::string error_body;

    httplib::Request req;
    req.method = "POST";
    req.path = url.path;
    req.headers = headers;
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    req.body = body;
    req.response_handler = [&](const httplib::Response& r) {
      status = r.status;
      return true;
    };
    req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
      if (cancelled_) return false;
      if (status < 200 || status >= 300) {
        error_body.append(data, len);
        return true;
      }
      sse.feed(std::string_view(data, len), [&](const std::string& payload) {
        if (payload == "[DONE]") return;
        auto j = Json::parse(payload, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) return;
        const auto& delta = j["choices"][0].value("delta", Json::object());
        // Reasoning and tool-call deltas are dropped; only visible text is knowledge.
        if (!delta.contains("content") || !delta["content"].is_string()) return;
        auto text = delta["content"].get<std::string>();
        if (text.empty()) return;
        queue.note_first_output(clock.now());
        for (auto& chunk : segmenter.feed(text)) queue.push(std::move(chunk), clock.now());
      });
      return true;
    };

    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    const bool ok = client.send(req, res, err);
    if (cancelled_) {
      queue.close(clock.now(), Error(ErrorCode::BackendFailure, "stream cancelled"));
      return;
    }
    if (!ok) throw Error(ErrorCode::NetworkError, httplib::to_string(err));
    if (status < 200 || status >= 300) throw classify_status(status, error_body);
    for (auto& chunk : segmenter.finish()) queue.push(std::move(chunk), clock.now());
    queue.close(clock.now());
  }

  std::atomic<bool> cancelled_{false};
  std::thread thread_;
};

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  parse_url(config_.url);
  if (config_.model.empty()) throw Error(ErrorCode::InvalidConfig, "backend.http.model is required");
}

std::string HttpBackend::request_body(const DialogueHistory& history) const {
  Json body;
  body["model"] = config_.model;
  body["stream"] = true;
  body["messages"] = Json::array();
  body["messages"].push_back({{"role", "system"}, {"content", config_.system_prompt}});
  for (const auto& m : history.messages()) {
    body["messages"].push_back({{"role", m.speaker == Speaker::User ? "user" : "assistant"}, {"content", m.text}});
  }
  return body.dump();
}

std::unique_ptr<BackendStream> HttpBackend::start_turn(const DialogueHistory& history, KnowledgeQueue& queue,
                                                       Clock& clock) {
  return std::make_unique<HttpStream>(config_, request_body(history), queue, clock);
}

HttpInfill::HttpInfill(HttpInfillConfig config) : config_(std::move(config)) { parse_url(config_.url); }

Generation HttpInfill::generate(const std::string& rendered_context, Clock& clock) {
  Generation g;
  g.started = clock.now();

  Json body;
  body["model"] = config_.model;
  body["prompt"] = rendered_context + generation_prompt();
  body["max_tokens"] = config_.max_tokens;
  body["stop"] = Json::array({std::string(kMessageEnd)});

  auto url = parse_url(config_.url);
  httplib::Client client(url.scheme_host_port);
  set_timeouts(client, config_.timeout_seconds);
  auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::InfillFailure, Error(ErrorCode::NetworkError, httplib::to_string(res.error())));
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::InfillFailure, classify_status(res->status, res->body));
  }

  std::string completion = res->body;
  if (res->get_header_value("Content-Type").find("json") != std::string::npos) {
    auto j = Json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InfillFailure, "unparseable JSON completion");
    if (j.contains("choices") && !j["choices"].empty() && j["choices"][0].contains("text")) {
      completion = j["choices"][0]["text"].get<std::string>();
    } else if (j.contains("text") && j["text"].is_string()) {
      completion = j["text"].get<std::string>();
    } else {
      throw Error(ErrorCode::InfillFailure, "completion JSON has no text");
    }
  }
  g.text = first_phrase_line(completion);
  if (g.text.empty()) throw Error(ErrorCode::InfillFailure, "empty completion");
  g.first_output = clock.now();
  return g;
}

}  // namespace infill
