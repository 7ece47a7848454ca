// SPDX-License-Identifier: Apache-2.0

#include "infill/protocol.hpp"

#include <algorithm>
#include <cctype>

#include "infill/error.hpp"
#include "infill/json_io.hpp"

namespace infill {

std::string_view to_string(EventKind kind) { return kind == EventKind::Chunk ? "chunk" : "silence"; }

EventKind event_kind_from_string(std::string_view s) {
  if (s == "chunk") return EventKind::Chunk;
  if (s == "silence") return EventKind::Silence;
  throw Error(ErrorCode::SchemaError, "unknown event kind '" + std::string(s) + "'");
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto begin = std::find_if_not(s.begin(), s.end(), is_space);
  auto end = std::find_if_not(s.rbegin(), std::string_view::reverse_iterator(begin), is_space).base();
  return std::string(begin, end);
}

std::size_t TurnTranscript::silence_count() const {
  return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(),
                                                [](const auto& e) { return e.kind == EventKind::Silence; }));
}

std::size_t TurnTranscript::chunk_count() const { return events_.size() - silence_count(); }

std::string TurnTranscript::joined_phrases() const {
  std::string out;
  for (const auto& p : phrases_) {
    if (!out.empty()) out += ' ';
    out += p.text;
  }
  return out;
}

TurnTranscript TurnTranscript::with_turn_index(std::size_t index) const {
  TurnTranscript copy = *this;
  copy.turn_index_ = index;
  return copy;
}

TurnState TurnState::open(std::string_view user_utterance) {
  auto trimmed = trim(user_utterance);
  if (trimmed.empty()) throw Error(ErrorCode::EmptyUtterance, "user utterance is blank");
  TurnState state;
  state.user_utterance_ = std::move(trimmed);
  return state;
}

void TurnState::require_open() const {
  if (status_ != Status::Open) throw Error(ErrorCode::ClosedTurn, "turn is already closed");
}

std::size_t TurnState::append_event(EventKind kind, std::string_view text, Duration timestamp) {
  require_open();
  if (pending()) {
    throw Error(ErrorCode::ProtocolViolation,
                "event " + std::to_string(events_.size() - 1) + " has not been answered yet");
  }
  if (kind == EventKind::Chunk && trim(text).empty()) {
    throw Error(ErrorCode::InvalidChunk, "knowledge chunk text is empty");
  }
  if (kind == EventKind::Silence && !text.empty()) {
    throw Error(ErrorCode::InvalidChunk, "silence event carries text");
  }
  if (timestamp < Duration::zero() || (!events_.empty() && timestamp < events_.back().timestamp)) {
    throw Error(ErrorCode::ProtocolViolation, "event timestamps must be non-negative and non-decreasing");
  }
  const auto seq = events_.size();
  events_.push_back(KnowledgeEvent{seq, kind, std::string(text), timestamp});
  return seq;
}

std::size_t TurnState::append_phrase(std::string_view text, Duration start_timestamp) {
  require_open();
  if (!pending()) throw Error(ErrorCode::ProtocolViolation, "no unanswered event to attach a phrase to");
  if (trim(text).empty()) throw Error(ErrorCode::EmptyPhrase, "phrase text is empty");
  const auto seq = phrases_.size();
  phrases_.push_back(ConversationalPhrase{seq, std::string(text), seq, start_timestamp});
  return seq;
}

TurnTranscript TurnState::close() {
  require_open();
  if (events_.size() != phrases_.size()) {
    throw Error(ErrorCode::UnbalancedTurn, std::to_string(events_.size()) + " events vs " +
                                               std::to_string(phrases_.size()) + " phrases");
  }
  status_ = Status::Closed;
  TurnTranscript t;
  t.user_utterance_ = user_utterance_;
  t.events_ = events_;
  t.phrases_ = phrases_;
  if (!phrases_.empty()) t.ttft_ = phrases_.front().start_timestamp;
  return t;
}

// --- JSON -----------------------------------------------------------------

Json to_json(const KnowledgeEvent& event) {
  Json j;
  j["seq"] = event.seq;
  j["kind"] = to_string(event.kind);
  if (event.kind == EventKind::Chunk) j["text"] = event.text;
  j["timestamp"] = to_seconds(event.timestamp);
  return j;
}

Json to_json(const ConversationalPhrase& phrase) {
  Json j;
  j["seq"] = phrase.seq;
  j["text"] = phrase.text;
  j["start_timestamp"] = to_seconds(phrase.start_timestamp);
  return j;
}

Json to_json(const TurnTranscript& transcript) {
  Json j;
  j["turn_index"] = transcript.turn_index();
  j["user"] = transcript.user_utterance();
  j["events"] = Json::array();
  for (const auto& e : transcript.events()) j["events"].push_back(to_json(e));
  j["phrases"] = Json::array();
  for (const auto& p : transcript.phrases()) j["phrases"].push_back(to_json(p));
  if (auto ttft = transcript.ttft()) j["ttft"] = to_seconds(*ttft);
  return j;
}

Json to_json(const Conversation& conversation) {
  Json j;
  j["id"] = conversation.id;
  j["domain"] = conversation.domain_label;
  j["turns"] = Json::array();
  for (const auto& t : conversation.turns) j["turns"].push_back(to_json(t));
  return j;
}

TurnTranscript transcript_from(const Json& j) {
  try {
    auto state = TurnState::open(j.at("user").get<std::string>());
    const auto& events = j.at("events");
    const auto& phrases = j.at("phrases");
    if (events.size() != phrases.size()) {
      throw Error(ErrorCode::UnbalancedTurn, "events and phrases differ in length");
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      const auto& p = phrases[i];
      if (e.at("seq").get<std::size_t>() != i || p.at("seq").get<std::size_t>() != i) {
        throw Error(ErrorCode::SchemaError, "seq values must be consecutive from 0");
      }
      auto kind = event_kind_from_string(e.at("kind").get<std::string>());
      std::string text = kind == EventKind::Chunk ? e.at("text").get<std::string>() : std::string();
      state.append_event(kind, text, from_seconds(e.at("timestamp").get<double>()));
      state.append_phrase(p.at("text").get<std::string>(), from_seconds(p.at("start_timestamp").get<double>()));
    }
    return state.close().with_turn_index(j.value("turn_index", std::size_t{0}));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaError, ex.what());
  }
}

std::string transcript_to_json(const TurnTranscript& transcript) { return to_json(transcript).dump(); }

TurnTranscript transcript_from_json(std::string_view document) {
  Json j;
  try {
    j = Json::parse(document);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
  return transcript_from(j);
}

std::string conversation_to_json(const Conversation& conversation) { return to_json(conversation).dump(); }

}  // namespace infill
