// SPDX-License-Identifier: Apache-2.0

#include "infill/prompt_format.hpp"

#include <cctype>

#include "infill/error.hpp"
#include "infill/json_io.hpp"

namespace infill {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Knowledge: return "knowledge";
  }
  return "user";
}

namespace {

Role role_from_string(std::string_view s) {
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  if (s == "knowledge") return Role::Knowledge;
  throw Error(ErrorCode::ParseError, "unknown role '" + std::string(s) + "'");
}

void check_content(std::string_view content) {
  if (content.find(kMessageStart) != std::string_view::npos || content.find(kMessageEnd) != std::string_view::npos) {
    throw Error(ErrorCode::SchemaError, "message content contains a template delimiter");
  }
}

}  // namespace

std::vector<RoleTaggedMessage> context_messages(std::string_view user_utterance,
                                                const std::vector<KnowledgeEvent>& events,
                                                const std::vector<ConversationalPhrase>& phrases) {
  if (events.size() != phrases.size() + 1) {
    throw Error(ErrorCode::NotPending, "context needs exactly one unanswered event");
  }
  std::vector<RoleTaggedMessage> messages;
  messages.reserve(2 * events.size());
  messages.push_back({Role::User, std::string(user_utterance)});
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.kind == EventKind::Chunk && e.text.find(kSilenceToken) != std::string::npos) {
      throw Error(ErrorCode::InvalidChunk, "chunk text contains the silence token");
    }
    messages.push_back({Role::Knowledge, e.kind == EventKind::Silence ? std::string(kSilenceToken) : e.text});
    if (i < phrases.size()) messages.push_back({Role::Assistant, phrases[i].text});
  }
  return messages;
}

std::vector<RoleTaggedMessage> context_messages(const TurnState& state) {
  return context_messages(state.user_utterance(), state.events(), state.phrases());
}

std::string render_messages(const std::vector<RoleTaggedMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    check_content(m.content);
    out += kMessageStart;
    out += to_string(m.role);
    out += '\n';
    out += m.content;
    out += kMessageEnd;
    out += '\n';
  }
  return out;
}

std::string render_context(const TurnState& state) { return render_messages(context_messages(state)); }

std::string generation_prompt() { return std::string(kMessageStart) + "assistant\n"; }

std::vector<RoleTaggedMessage> parse_messages(std::string_view rendered) {
  std::vector<RoleTaggedMessage> messages;
  std::size_t pos = 0;
  while (pos < rendered.size()) {
    if (rendered.substr(pos, kMessageStart.size()) != kMessageStart) {
      throw Error(ErrorCode::ParseError, "expected message start at offset " + std::to_string(pos));
    }
    pos += kMessageStart.size();
    auto newline = rendered.find('\n', pos);
    if (newline == std::string_view::npos) throw Error(ErrorCode::ParseError, "unterminated role line");
    auto role = role_from_string(rendered.substr(pos, newline - pos));
    pos = newline + 1;
    auto end = rendered.find(kMessageEnd, pos);
    if (end == std::string_view::npos) throw Error(ErrorCode::ParseError, "unterminated message");
    messages.push_back({role, std::string(rendered.substr(pos, end - pos))});
    pos = end + kMessageEnd.size();
    if (pos >= rendered.size() || rendered[pos] != '\n') throw Error(ErrorCode::ParseError, "missing newline after message");
    ++pos;
  }
  return messages;
}

ParsedContext parse_context(std::string_view rendered) {
  auto messages = parse_messages(rendered);
  if (messages.size() < 2 || messages.size() % 2 != 0 || messages.front().role != Role::User) {
    throw Error(ErrorCode::ParseError, "context must be a user message followed by knowledge/assistant pairs");
  }
  ParsedContext out;
  out.user_utterance = messages.front().content;
  for (std::size_t i = 1; i < messages.size(); ++i) {
    const auto& m = messages[i];
    const bool expect_knowledge = i % 2 == 1;
    if (expect_knowledge && m.role != Role::Knowledge) throw Error(ErrorCode::ParseError, "expected knowledge message");
    if (!expect_knowledge && m.role != Role::Assistant) throw Error(ErrorCode::ParseError, "expected assistant message");
    if (expect_knowledge) {
      const bool silent = m.content == kSilenceToken;
      out.events.push_back(KnowledgeEvent{out.events.size(), silent ? EventKind::Silence : EventKind::Chunk,
                                          silent ? std::string() : m.content, Duration::zero()});
    } else {
      const auto seq = out.phrases.size();
      out.phrases.push_back(ConversationalPhrase{seq, m.content, seq, Duration::zero()});
    }
  }
  return out;
}

std::vector<TurnRecord> parse_transcript(std::string_view document) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
  if (!doc.is_object() || !doc.contains("turns") || !doc["turns"].is_array()) {
    throw Error(ErrorCode::SchemaError, "document has no 'turns' array");
  }
  std::vector<TurnRecord> records;
  std::size_t index = 0;
  for (const auto& turn : doc["turns"]) {
    const auto where = "turn " + std::to_string(index);
    for (const char* field : {"user", "responder", "responder_thoughts"}) {
      if (!turn.contains(field)) throw Error(ErrorCode::SchemaError, where + " missing '" + field + "'");
    }
    try {
      TurnRecord record;
      record.user_utterance = turn["user"].get<std::string>();
      auto responder = turn["responder"].get<std::vector<std::string>>();
      auto thoughts = turn["responder_thoughts"].get<std::vector<std::string>>();
      if (responder.size() != thoughts.size()) {
        throw Error(ErrorCode::AlignmentError, where + ": " + std::to_string(responder.size()) + " responder vs " +
                                                   std::to_string(thoughts.size()) + " responder_thoughts");
      }
      for (std::size_t j = 0; j < responder.size(); ++j) {
        const bool silent = thoughts[j] == kSilenceToken;
        record.events.push_back(KnowledgeEvent{j, silent ? EventKind::Silence : EventKind::Chunk,
                                               silent ? std::string() : thoughts[j], Duration::zero()});
        record.phrases.push_back(ConversationalPhrase{j, responder[j], j, Duration::zero()});
      }
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::SchemaError, where + ": " + ex.what());
    }
    ++index;
  }
  return records;
}

std::vector<std::string> SentenceSegmenter::feed(std::string_view delta) {
  buffer_.append(delta);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = scanned_; i + 1 < buffer_.size(); ++i) {
    const char c = buffer_[i];
    if ((c == '.' || c == '!' || c == '?') && std::isspace(static_cast<unsigned char>(buffer_[i + 1]))) {
      auto sentence = trim(std::string_view(buffer_).substr(start, i + 1 - start));
      if (!sentence.empty()) out.push_back(std::move(sentence));
      start = i + 1;
    }
  }
  buffer_.erase(0, start);
  // The last character may be punctuation whose follower has not arrived yet.
  scanned_ = buffer_.empty() ? 0 : buffer_.size() - 1;
  return out;
}

std::vector<std::string> SentenceSegmenter::finish() {
  std::vector<std::string> out;
  auto rest = trim(buffer_);
  if (!rest.empty()) out.push_back(std::move(rest));
  buffer_.clear();
  scanned_ = 0;
  return out;
}

std::vector<std::string> segment_text(std::string_view text) {
  SentenceSegmenter seg;
  auto out = seg.feed(text);
  for (auto& s : seg.finish()) out.push_back(std::move(s));
  return out;
}

}  // namespace infill
