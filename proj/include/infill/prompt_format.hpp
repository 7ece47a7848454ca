// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "infill/protocol.hpp"

namespace infill {

/// Marker rendered in place of a silence event. Compared byte-exactly.
inline constexpr std::string_view kSilenceToken = "<|sil|>";

// Chat template: every message is
//   <|im_start|>{role}\n{content}<|im_end|>\n
// with role in {user, knowledge, assistant}. Content may span lines but must
// not contain either delimiter.
inline constexpr std::string_view kMessageStart = "<|im_start|>";
inline constexpr std::string_view kMessageEnd = "<|im_end|>";

enum class Role { User, Assistant, Knowledge };

std::string_view to_string(Role role);

struct RoleTaggedMessage {
  Role role;
  std::string content;

  bool operator==(const RoleTaggedMessage&) const = default;
};

/// Interleaved message list [user, knowledge e0, assistant c0, ..., knowledge ek]
/// for a turn whose last event is still unanswered.
std::vector<RoleTaggedMessage> context_messages(const TurnState& state);
std::vector<RoleTaggedMessage> context_messages(std::string_view user_utterance,
                                                const std::vector<KnowledgeEvent>& events,
                                                const std::vector<ConversationalPhrase>& phrases);

std::string render_messages(const std::vector<RoleTaggedMessage>& messages);

/// Throws NotPending unless exactly one event awaits its phrase.
std::string render_context(const TurnState& state);

/// Text appended to a rendered context to ask a model for the next phrase.
std::string generation_prompt();

std::vector<RoleTaggedMessage> parse_messages(std::string_view rendered);

/// Inverse of render_context. Event timestamps are not part of the rendering
/// and come back as zero.
struct ParsedContext {
  std::string user_utterance;
  std::vector<KnowledgeEvent> events;
  std::vector<ConversationalPhrase> phrases;
};
ParsedContext parse_context(std::string_view rendered);

/// One turn of a dataset document mapped onto protocol types.
struct TurnRecord {
  std::string user_utterance;
  std::vector<KnowledgeEvent> events;
  std::vector<ConversationalPhrase> phrases;

  bool operator==(const TurnRecord&) const = default;
};

/// Parses a dataset conversation document (see dataset.hpp for the schema).
/// Thoughts equal to the silence token become Silence events.
std::vector<TurnRecord> parse_transcript(std::string_view document);

/// Incremental sentence splitter for backend output. A boundary is a '.', '!'
/// or '?' immediately followed by whitespace. No abbreviation handling.
class SentenceSegmenter {
 public:
  std::vector<std::string> feed(std::string_view delta);
  std::vector<std::string> finish();

 private:
  std::string buffer_;
  std::size_t scanned_ = 0;
};

std::vector<std::string> segment_text(std::string_view text);

}  // namespace infill
