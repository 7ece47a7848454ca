// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "infill/config.hpp"
#include "infill/json_io.hpp"
#include "infill/turn_engine.hpp"

namespace infill {

inline constexpr int kProtocolVersion = 1;

enum class StreamKind { PhraseDelta, PhraseDone, KnowledgeChunk, SilenceTick, TurnDone, Error };

std::string_view to_string(StreamKind kind);
/// Throws ParseError for unknown names.
StreamKind stream_kind_from_string(std::string_view text);

/// One frame of the event protocol. Timestamps are seconds from turn start.
/// Which optional fields are present depends on the kind:
///   knowledge_chunk  event_seq, text, timestamp
///   silence_tick     event_seq, timestamp
///   phrase_delta     phrase_seq, text, timestamp
///   phrase_done      phrase_seq, text, source_event_seq, timestamp (phrase start)
///   turn_done        event_count, phrase_count, ttft (when a phrase exists), error (when failed)
///   error            code, text (message)
struct StreamEvent {
  StreamKind kind = StreamKind::Error;
  std::size_t turn_index = 0;
  std::size_t seq = 0;
  std::optional<std::size_t> event_seq;
  std::optional<std::size_t> phrase_seq;
  std::optional<std::size_t> source_event_seq;
  std::optional<std::string> text;
  std::optional<double> timestamp;
  std::optional<std::size_t> event_count;
  std::optional<std::size_t> phrase_count;
  std::optional<double> ttft;
  std::optional<std::string> code;
  std::optional<std::string> error;

  bool operator==(const StreamEvent&) const = default;
};

/// NDJSON frame body (without the trailing newline).
Json to_json(const StreamEvent& event, std::string_view session_id);
/// Throws ParseError on malformed frames or a protocol version other than 1.
StreamEvent stream_event_from_json(const Json& frame);

/// Rebuilds (events, phrases) of one turn from its frames.
struct ProjectedTurn {
  std::vector<KnowledgeEvent> events;
  std::vector<ConversationalPhrase> phrases;
};
ProjectedTurn project_turn(const std::vector<StreamEvent>& frames, std::size_t turn_index);

/// A subscriber's view of a session stream. Delivery is in emission order.
/// When the bounded buffer overflows the subscription receives a final Error
/// frame and is closed.
class Subscription {
 public:
  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

  /// Next frame, or nullopt on timeout or once the subscription is closed and
  /// drained.
  std::optional<StreamEvent> next(std::chrono::milliseconds timeout);
  bool closed() const;
  void close();

  /// Called by the session. Returns false once the subscriber is cut off.
  bool offer(const StreamEvent& event);
  /// Replay frames bypass the bound.
  void preload(const std::vector<StreamEvent>& events);

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<StreamEvent> buffer_;
  std::size_t capacity_;
  bool closed_ = false;
};

/// Builds the adapters for a session from its merged configuration.
using RuntimeFactory = std::function<Runtime(const Json& config)>;

struct CreatedSession {
  std::string id;
  Json config;
};

/// Per-session settings come from the merged configuration: the subscriber
/// buffer size is gateway.subscriber_buffer, and when gateway.transcript_dir
/// is set every completed turn rewrites <dir>/<session id>.json.
struct GatewayOptions {
  /// Per-session configuration before overrides.
  Json base_config = default_config();
  RuntimeFactory factory;  // build_runtime when empty
};

class SessionManager {
 public:
  explicit SessionManager(GatewayOptions options = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// `overrides` maps dotted keys to JSON values. Throws InvalidConfig.
  CreatedSession create_session(const Json& overrides = Json::object());

  /// Starts a turn on a worker thread and returns its turn index. Throws
  /// SessionNotFound, TurnInProgress or EmptyUtterance.
  std::size_t post_utterance(const std::string& session_id, const std::string& text);

  /// Replays the active turn's frames, then follows the live stream. Throws
  /// SessionNotFound.
  /// `buffer` overrides gateway.subscriber_buffer for this subscriber only.
  std::shared_ptr<Subscription> subscribe(const std::string& session_id,
                                          std::optional<std::size_t> buffer = std::nullopt);

  Conversation transcript(const std::string& session_id) const;
  DialogueHistory history(const std::string& session_id) const;
  Json config(const std::string& session_id) const;
  bool turn_active(const std::string& session_id) const;
  /// Blocks until the session has no active turn.
  void wait_idle(const std::string& session_id) const;
  std::size_t session_count() const;
  /// Live subscriptions of a session.
  std::size_t subscriber_count(const std::string& session_id) const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& session_id) const;
  void run_worker(const std::shared_ptr<Session>& session, std::string utterance);

  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
};

}  // namespace infill
