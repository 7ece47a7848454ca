// SPDX-License-Identifier: Apache-2.0

#include "infill/gateway.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include "infill/error.hpp"

namespace infill {

std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::PhraseDelta: return "phrase_delta";
    case StreamKind::PhraseDone: return "phrase_done";
    case StreamKind::KnowledgeChunk: return "knowledge_chunk";
    case StreamKind::SilenceTick: return "silence_tick";
    case StreamKind::TurnDone: return "turn_done";
    case StreamKind::Error: return "error";
  }
  return "error";
}

StreamKind stream_kind_from_string(std::string_view text) {
  for (auto k : {StreamKind::PhraseDelta, StreamKind::PhraseDone, StreamKind::KnowledgeChunk, StreamKind::SilenceTick,
                 StreamKind::TurnDone, StreamKind::Error}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::ParseError, "unknown frame kind '" + std::string(text) + "'");
}

Json to_json(const StreamEvent& e, std::string_view session_id) {
  Json j;
  j["protocol_version"] = kProtocolVersion;
  j["session_id"] = session_id;
  j["turn_index"] = e.turn_index;
  j["seq"] = e.seq;
  j["kind"] = to_string(e.kind);
  if (e.event_seq) j["event_seq"] = *e.event_seq;
  if (e.phrase_seq) j["phrase_seq"] = *e.phrase_seq;
  if (e.source_event_seq) j["source_event_seq"] = *e.source_event_seq;
  if (e.text) j["text"] = *e.text;
  if (e.timestamp) j["timestamp"] = *e.timestamp;
  if (e.event_count) j["event_count"] = *e.event_count;
  if (e.phrase_count) j["phrase_count"] = *e.phrase_count;
  if (e.ttft) j["ttft"] = *e.ttft;
  if (e.code) j["code"] = *e.code;
  if (e.error) j["error"] = *e.error;
  return j;
}

StreamEvent stream_event_from_json(const Json& j) {
  try {
    if (j.at("protocol_version").get<int>() != kProtocolVersion) {
      throw Error(ErrorCode::ParseError, "unsupported protocol version " + j.at("protocol_version").dump());
    }
    StreamEvent e;
    e.kind = stream_kind_from_string(j.at("kind").get<std::string>());
    e.turn_index = j.at("turn_index").get<std::size_t>();
    e.seq = j.at("seq").get<std::size_t>();
    auto opt_size = [&j](const char* key, std::optional<std::size_t>& out) {
      if (j.contains(key)) out = j.at(key).get<std::size_t>();
    };
    auto opt_double = [&j](const char* key, std::optional<double>& out) {
      if (j.contains(key)) out = j.at(key).get<double>();
    };
    auto opt_string = [&j](const char* key, std::optional<std::string>& out) {
      if (j.contains(key)) out = j.at(key).get<std::string>();
    };
    opt_size("event_seq", e.event_seq);
    opt_size("phrase_seq", e.phrase_seq);
    opt_size("source_event_seq", e.source_event_seq);
    opt_string("text", e.text);
    opt_double("timestamp", e.timestamp);
    opt_size("event_count", e.event_count);
    opt_size("phrase_count", e.phrase_count);
    opt_double("ttft", e.ttft);
    opt_string("code", e.code);
    opt_string("error", e.error);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

ProjectedTurn project_turn(const std::vector<StreamEvent>& frames, std::size_t turn_index) {
  ProjectedTurn out;
  for (const auto& f : frames) {
    if (f.turn_index != turn_index) continue;
    switch (f.kind) {
      case StreamKind::KnowledgeChunk:
        out.events.push_back({*f.event_seq, EventKind::Chunk, *f.text, from_seconds(*f.timestamp)});
        break;
      case StreamKind::SilenceTick:
        out.events.push_back({*f.event_seq, EventKind::Silence, "", from_seconds(*f.timestamp)});
        break;
      case StreamKind::PhraseDone:
        out.phrases.push_back({*f.phrase_seq, *f.text, *f.source_event_seq, from_seconds(*f.timestamp)});
        break;
      default:
        break;
    }
  }
  return out;
}

// --- subscriptions -----------------------------------------------------------

std::optional<StreamEvent> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [this] { return !buffer_.empty() || closed_; });
  if (buffer_.empty()) return std::nullopt;
  auto e = std::move(buffer_.front());
  buffer_.pop_front();
  return e;
}

bool Subscription::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

void Subscription::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::offer(const StreamEvent& event) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return false;
    if (buffer_.size() >= capacity_) {
      StreamEvent overflow;
      overflow.kind = StreamKind::Error;
      overflow.turn_index = event.turn_index;
      overflow.seq = event.seq;
      overflow.code = "SubscriberOverflow";
      overflow.text = "subscriber fell " + std::to_string(capacity_) + " frames behind and was disconnected";
      buffer_.push_back(std::move(overflow));
      closed_ = true;
    } else {
      buffer_.push_back(event);
    }
  }
  cv_.notify_all();
  return true;
}

void Subscription::preload(const std::vector<StreamEvent>& events) {
  {
    std::lock_guard lock(mutex_);
    buffer_.insert(buffer_.end(), events.begin(), events.end());
  }
  cv_.notify_all();
}

// --- sessions ----------------------------------------------------------------

struct SessionManager::Session {
  std::string id;
  Json config;
  Runtime runtime;
  std::unique_ptr<DialogueSession> dialogue;
  std::size_t subscriber_buffer = 1024;
  std::string transcript_dir;

  mutable std::mutex mutex;
  mutable std::condition_variable idle_cv;
  bool active = false;
  std::size_t turn_index = 0;
  std::size_t next_seq = 0;
  std::vector<StreamEvent> replay;
  std::vector<std::shared_ptr<Subscription>> subscribers;
  Conversation conversation;
  DialogueHistory history;
  std::thread worker;

  void emit_locked(StreamEvent e) {
    e.turn_index = turn_index;
    e.seq = next_seq++;
    replay.push_back(e);
    std::erase_if(subscribers, [&e](const auto& s) { return !s->offer(e); });
  }

  void emit(StreamEvent e) {
    std::lock_guard lock(mutex);
    emit_locked(std::move(e));
  }

  void persist_locked() const {
    if (transcript_dir.empty()) return;
    std::filesystem::create_directories(transcript_dir);
    const auto path = std::filesystem::path(transcript_dir) / (id + ".json");
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp);
      out << to_json(conversation).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }
};

namespace {

class FrameObserver final : public TurnObserver {
 public:
  using Emit = std::function<void(StreamEvent)>;
  explicit FrameObserver(Emit emit) : emit_(std::move(emit)) {}

  void on_event(const KnowledgeEvent& event) override {
    StreamEvent e;
    e.kind = event.kind == EventKind::Chunk ? StreamKind::KnowledgeChunk : StreamKind::SilenceTick;
    e.event_seq = event.seq;
    if (event.kind == EventKind::Chunk) e.text = event.text;
    e.timestamp = to_seconds(event.timestamp);
    emit_(std::move(e));
  }

  void on_phrase_delta(std::size_t seq, const std::string& text, Duration at) override {
    StreamEvent e;
    e.kind = StreamKind::PhraseDelta;
    e.phrase_seq = seq;
    e.text = text;
    e.timestamp = to_seconds(at);
    emit_(std::move(e));
  }

  void on_phrase(const ConversationalPhrase& phrase, const Generation&) override {
    StreamEvent e;
    e.kind = StreamKind::PhraseDone;
    e.phrase_seq = phrase.seq;
    e.source_event_seq = phrase.source_event_seq;
    e.text = phrase.text;
    e.timestamp = to_seconds(phrase.start_timestamp);
    emit_(std::move(e));
  }

 private:
  Emit emit_;
};

std::string random_id() {
  static std::mutex m;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(m);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

SessionManager::SessionManager(GatewayOptions options) : options_(std::move(options)) {
  if (!options_.factory) options_.factory = [](const Json& config) { return build_runtime(config); };
  validate_config(options_.base_config);
}

SessionManager::~SessionManager() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  for (auto& s : all) {
    std::thread worker;
    {
      std::lock_guard lock(s->mutex);
      worker = std::move(s->worker);
      for (auto& sub : s->subscribers) sub->close();
    }
    if (worker.joinable()) worker.join();
  }
}

CreatedSession SessionManager::create_session(const Json& overrides) {
  if (!overrides.is_object()) throw Error(ErrorCode::InvalidConfig, "overrides must be an object of dotted keys");
  auto config = options_.base_config;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const auto& v = it.value();
    apply_override(config, it.key(), v.is_string() ? v.get<std::string>() : v.dump());
  }
  validate_config(config);

  auto session = std::make_shared<Session>();
  session->config = config;
  session->runtime = options_.factory(config);
  session->subscriber_buffer = config["gateway"]["subscriber_buffer"].get<std::size_t>();
  session->transcript_dir = config["gateway"]["transcript_dir"].get<std::string>();
  {
    std::lock_guard lock(mutex_);
    session->id = random_id() + std::to_string(next_id_++);
    session->dialogue = std::make_unique<DialogueSession>(*session->runtime.backend, *session->runtime.infill,
                                                          *session->runtime.clock, session->runtime.policy,
                                                          session->id);
    session->conversation.id = session->id;
    sessions_.emplace(session->id, session);
  }
  return CreatedSession{session->id, config};
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::SessionNotFound, session_id);
  return it->second;
}

std::size_t SessionManager::post_utterance(const std::string& session_id, const std::string& text) {
  auto session = find(session_id);
  const auto utterance = trim(text);
  std::thread previous;
  std::size_t turn_index = 0;
  {
    std::lock_guard lock(session->mutex);
    if (session->active) throw Error(ErrorCode::TurnInProgress, "session " + session_id + " is mid-turn");
    if (utterance.empty()) throw Error(ErrorCode::EmptyUtterance, "user utterance is blank");
    previous = std::move(session->worker);
    session->active = true;
    session->turn_index = turn_index = session->conversation.turns.size();
    session->next_seq = 0;
    session->replay.clear();
  }
  if (previous.joinable()) previous.join();
  std::thread worker([this, session, utterance] { run_worker(session, utterance); });
  std::lock_guard lock(session->mutex);
  session->worker = std::move(worker);
  return turn_index;
}

void SessionManager::run_worker(const std::shared_ptr<Session>& session, std::string utterance) {
  FrameObserver observer([&session](StreamEvent e) { session->emit(std::move(e)); });
  std::optional<TurnOutcome> outcome;
  std::optional<std::string> failure;
  std::string failure_code;
  try {
    outcome = session->dialogue->run(utterance, &observer);
  } catch (const Error& e) {
    failure = e.what();
    failure_code = std::string(to_string(e.code()));
  } catch (const std::exception& e) {
    failure = e.what();
    failure_code = "Internal";
  }

  std::lock_guard lock(session->mutex);
  if (failure) {
    StreamEvent err;
    err.kind = StreamKind::Error;
    err.code = failure_code;
    err.text = *failure;
    session->emit_locked(std::move(err));
  }
  session->conversation = session->dialogue->conversation();
  session->history = session->dialogue->history();
  try {
    session->persist_locked();
  } catch (const std::exception& e) {
    StreamEvent err;
    err.kind = StreamKind::Error;
    err.code = "PersistenceFailure";
    err.text = e.what();
    session->emit_locked(std::move(err));
  }

  StreamEvent done;
  done.kind = StreamKind::TurnDone;
  std::size_t events = 0;
  std::size_t phrases = 0;
  for (const auto& f : session->replay) {
    events += f.kind == StreamKind::KnowledgeChunk || f.kind == StreamKind::SilenceTick ? 1 : 0;
    phrases += f.kind == StreamKind::PhraseDone ? 1 : 0;
  }
  done.event_count = events;
  done.phrase_count = phrases;
  if (outcome) {
    if (auto ttft = outcome->transcript.ttft()) done.ttft = to_seconds(*ttft);
    if (outcome->backend_error) done.error = outcome->backend_error->what();
  } else {
    done.error = failure;
  }
  session->emit_locked(std::move(done));
  session->active = false;
  session->idle_cv.notify_all();
}

std::shared_ptr<Subscription> SessionManager::subscribe(const std::string& session_id,
                                                        std::optional<std::size_t> buffer) {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  auto sub = std::make_shared<Subscription>(buffer.value_or(session->subscriber_buffer));
  if (session->active) sub->preload(session->replay);
  session->subscribers.push_back(sub);
  return sub;
}

Conversation SessionManager::transcript(const std::string& session_id) const {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  return session->conversation;
}

DialogueHistory SessionManager::history(const std::string& session_id) const {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  return session->history;
}

Json SessionManager::config(const std::string& session_id) const { return find(session_id)->config; }

bool SessionManager::turn_active(const std::string& session_id) const {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  return session->active;
}

void SessionManager::wait_idle(const std::string& session_id) const {
  auto session = find(session_id);
  std::unique_lock lock(session->mutex);
  session->idle_cv.wait(lock, [&] { return !session->active; });
}

std::size_t SessionManager::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::size_t SessionManager::subscriber_count(const std::string& session_id) const {
  auto session = find(session_id);
  std::lock_guard lock(session->mutex);
  std::erase_if(session->subscribers, [](const auto& s) { return s->closed(); });
  return session->subscribers.size();
}

}  // namespace infill
