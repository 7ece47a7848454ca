// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "infill/clock.hpp"

namespace infill {

enum class EventKind { Chunk, Silence };

std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view s);

/// One element of the external stream seen by the infill generator: a
/// backend knowledge chunk or a silence marker.
struct KnowledgeEvent {
  std::size_t seq = 0;
  EventKind kind = EventKind::Silence;
  std::string text;  // empty iff kind == Silence
  Duration timestamp{};

  bool operator==(const KnowledgeEvent&) const = default;
};

/// One infill output, conditioned on the event with the same seq.
struct ConversationalPhrase {
  std::size_t seq = 0;
  std::string text;
  std::size_t source_event_seq = 0;
  /// When the phrase starts reaching the user (first emitted character).
  Duration start_timestamp{};

  bool operator==(const ConversationalPhrase&) const = default;
};

/// Closed, immutable record of one turn. Construct through TurnState::close().
class TurnTranscript {
 public:
  TurnTranscript() = default;

  const std::string& user_utterance() const { return user_utterance_; }
  const std::vector<KnowledgeEvent>& events() const { return events_; }
  const std::vector<ConversationalPhrase>& phrases() const { return phrases_; }
  std::size_t turn_index() const { return turn_index_; }
  std::optional<Duration> ttft() const { return ttft_; }
  std::size_t size() const { return phrases_.size(); }

  std::size_t silence_count() const;
  std::size_t chunk_count() const;

  /// Phrase texts joined with single spaces.
  std::string joined_phrases() const;

  TurnTranscript with_turn_index(std::size_t index) const;

  bool operator==(const TurnTranscript&) const = default;

 private:
  friend class TurnState;

  std::string user_utterance_;
  std::vector<KnowledgeEvent> events_;
  std::vector<ConversationalPhrase> phrases_;
  std::size_t turn_index_ = 0;
  std::optional<Duration> ttft_;
};

/// Mutable record of the turn in progress. Events and phrases strictly
/// alternate: at most one event is waiting for its phrase.
class TurnState {
 public:
  enum class Status { Open, Closed };

  /// Throws EmptyUtterance when the trimmed utterance is blank.
  static TurnState open(std::string_view user_utterance);

  std::size_t append_event(EventKind kind, std::string_view text, Duration timestamp);
  std::size_t append_phrase(std::string_view text, Duration start_timestamp);
  TurnTranscript close();

  const std::string& user_utterance() const { return user_utterance_; }
  const std::vector<KnowledgeEvent>& events() const { return events_; }
  const std::vector<ConversationalPhrase>& phrases() const { return phrases_; }
  Status status() const { return status_; }
  bool pending() const { return events_.size() == phrases_.size() + 1; }

 private:
  TurnState() = default;
  void require_open() const;

  std::string user_utterance_;
  std::vector<KnowledgeEvent> events_;
  std::vector<ConversationalPhrase> phrases_;
  Status status_ = Status::Open;
};

inline constexpr std::string_view kDomains[] = {"advice",   "assistant",        "education",
                                                "planning", "customer_service", "medical"};

struct Conversation {
  std::string id;
  std::string domain_label;
  std::vector<TurnTranscript> turns;
};

std::string trim(std::string_view s);

// Canonical JSON form. Field names are shared with the gateway and fixtures.
std::string transcript_to_json(const TurnTranscript& transcript);
TurnTranscript transcript_from_json(std::string_view document);
std::string conversation_to_json(const Conversation& conversation);

}  // namespace infill
