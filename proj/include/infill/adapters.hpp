// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "infill/clock.hpp"
#include "infill/knowledge_queue.hpp"

namespace infill {

enum class Speaker { User, Assistant };

struct DialogueMessage {
  Speaker speaker;
  std::string text;

  bool operator==(const DialogueMessage&) const = default;
};

/// Conversation-level history kept for the backend only. Alternates
/// user/assistant starting with user.
class DialogueHistory {
 public:
  void append_user(std::string text);
  void append_assistant(std::string text);
  /// Drops a trailing user message (used when a turn is abandoned).
  void rollback_user();

  const std::vector<DialogueMessage>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool awaiting_assistant() const { return !messages_.empty() && messages_.back().speaker == Speaker::User; }

  bool operator==(const DialogueHistory&) const = default;

 private:
  std::vector<DialogueMessage> messages_;
};

/// A running backend request. Destroying it cancels and joins any producer.
class BackendStream {
 public:
  virtual ~BackendStream() = default;
  virtual void cancel() {}
};

/// Conversation-level knowledge source. start_turn receives the full history
/// whose last message is the current user utterance, and feeds the queue
/// until it closes it (cleanly or with an error).
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string label() const = 0;
  virtual std::unique_ptr<BackendStream> start_turn(const DialogueHistory& history, KnowledgeQueue& queue,
                                                    Clock& clock) = 0;
};

struct Generation {
  std::string text;
  Duration started{};
  Duration first_output{};
};

/// Turn-level phrase generator.
class Infill {
 public:
  virtual ~Infill() = default;
  virtual std::string label() const = 0;
  /// Returns one phrase for the rendered context. Throws InfillFailure.
  virtual Generation generate(const std::string& rendered_context, Clock& clock) = 0;
};

// --- scripted adapters ----------------------------------------------------

struct ScriptedSchedule {
  struct Entry {
    double delay_seconds = 0;
    std::string text;
  };
  std::vector<Entry> chunks;
  double close_delay_seconds = 0;
  /// When set, the stream ends with this provider error instead of a clean close.
  std::optional<std::string> failure;

  /// Throws InvalidConfig on negative delays or empty texts.
  void validate() const;
};

ScriptedSchedule schedule_from_json(std::string_view document);

/// Replays a schedule. Under a virtual clock every chunk is enqueued up front
/// with its future arrival time; under a real clock a producer thread sleeps
/// between chunks.
class ScriptedBackend final : public Backend {
 public:
  using ScheduleFn = std::function<ScriptedSchedule(const DialogueHistory&)>;

  explicit ScriptedBackend(ScriptedSchedule schedule, std::string label = "scripted-backend");
  ScriptedBackend(ScheduleFn schedule_fn, std::string label);

  std::string label() const override { return label_; }
  std::unique_ptr<BackendStream> start_turn(const DialogueHistory& history, KnowledgeQueue& queue,
                                            Clock& clock) override;

  /// Every history received by start_turn, in call order.
  std::vector<DialogueHistory> requests() const;

 private:
  ScheduleFn schedule_fn_;
  std::string label_;
  mutable std::mutex mutex_;
  std::vector<DialogueHistory> requests_;
};

/// Returns the text of the last knowledge message of a rendered context, or
/// nullopt when that message is the silence token.
std::optional<std::string> last_knowledge(const std::string& rendered_context);

class ScriptedInfill final : public Infill {
 public:
  using PhraseFn = std::function<std::string(const std::string& rendered_context)>;

  /// Echoes the latest chunk verbatim, or `silence_phrase` after a silence.
  static PhraseFn echo(std::string silence_phrase = "One moment.");
  static PhraseFn canned(std::string text);

  explicit ScriptedInfill(double latency_seconds, PhraseFn phrase_fn = echo(), std::string label = "scripted-infill");

  std::string label() const override { return label_; }
  Generation generate(const std::string& rendered_context, Clock& clock) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  Duration latency_;
  PhraseFn phrase_fn_;
  std::string label_;
  std::atomic<std::size_t> calls_{0};
};

// --- network adapters -----------------------------------------------------

inline constexpr std::string_view kDefaultKnowledgePrompt =
    "You are a knowledge source. Respond in short standalone sentences. No greetings, no filler.";

struct HttpBackendConfig {
  /// Full URL of an OpenAI-compatible streaming chat completions endpoint.
  std::string url;
  std::string model;
  /// Name of the environment variable holding the API key; empty for none.
  std::string api_key_env;
  std::string system_prompt = std::string(kDefaultKnowledgePrompt);
  double timeout_seconds = 60;
};

/// Streams chat completions (server-sent events), drops non-text deltas and
/// splits the text into sentence chunks.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string label() const override { return "http:" + config_.model; }
  std::unique_ptr<BackendStream> start_turn(const DialogueHistory& history, KnowledgeQueue& queue,
                                            Clock& clock) override;

  /// The JSON request body sent for a history. Exposed for inspection.
  std::string request_body(const DialogueHistory& history) const;

 private:
  HttpBackendConfig config_;
};

struct HttpInfillConfig {
  /// Full URL of a completion endpoint. JSON responses are read as
  /// {"choices":[{"text":...}]} or {"text":...}; other bodies as plain text.
  std::string url;
  std::string model;
  int max_tokens = 48;
  double timeout_seconds = 30;
};

/// Posts the rendered context and keeps the first non-empty line of the reply.
class HttpInfill final : public Infill {
 public:
  explicit HttpInfill(HttpInfillConfig config);

  std::string label() const override { return "http:" + config_.model; }
  Generation generate(const std::string& rendered_context, Clock& clock) override;

 private:
  HttpInfillConfig config_;
};

/// First non-empty trimmed line with any silence tokens removed; empty if none.
std::string first_phrase_line(std::string_view completion);

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};
/// Splits "http://host:port/path" into its origin and path. Throws InvalidConfig.
ParsedUrl parse_url(std::string_view url);

}  // namespace infill
