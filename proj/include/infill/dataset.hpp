// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "infill/adapters.hpp"
#include "infill/entailment.hpp"
#include "infill/json_io.hpp"

namespace infill {

// Dataset document, one JSON object per line in corpus files:
//   {"id": str, "domain": str, "seed": str,
//    "turns": [{"user": str, "responder": [str...], "responder_thoughts": [str...]}]}
// A thought equal to the silence token marks a filler sentence.
struct DocumentTurn {
  std::string user;
  std::vector<std::string> responder;
  std::vector<std::string> responder_thoughts;
};

struct ConversationDocument {
  std::string id;
  std::string domain;
  std::string seed;
  std::vector<DocumentTurn> turns;
};

Json to_json(const ConversationDocument& doc);
/// Throws ParseError for malformed JSON or fields of the wrong type.
ConversationDocument document_from_json(std::string_view line);

inline constexpr std::size_t kMinTurns = 8;
inline constexpr std::size_t kMaxTurns = 12;

enum class ViolationKind {
  NoTurns,
  EmptyUser,
  EmptyResponder,
  AlignmentViolation,
  EmptySentence,
  SilenceInResponder,
  ChunkContainsSilence,
  LengthWarning,  // outside 8-12 turns; a warning for ingested data
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::optional<std::size_t> turn;
  std::string detail;

  bool is_warning() const { return kind == ViolationKind::LengthWarning; }
};

std::vector<Violation> validate_document(const ConversationDocument& doc);
bool has_errors(const std::vector<Violation>& violations);

struct TrainingExample {
  std::string rendered_context;
  std::string target_phrase;
  std::string conversation_id;
  std::size_t turn_index = 0;
  std::size_t phrase_index = 0;
};

Json to_json(const TrainingExample& example);
TrainingExample example_from_json(std::string_view line);

/// One example per (turn, phrase j): context holds events 0..j and phrases
/// 0..j-1, target is phrase j. Throws ValidationError on invalid documents.
std::vector<TrainingExample> split_turns(const ConversationDocument& doc);

struct RejectedExample {
  TrainingExample example;
  std::string reason;
};

struct FilterResult {
  std::vector<TrainingExample> kept;
  std::vector<RejectedExample> rejected;
};

/// Keeps examples whose final knowledge message entails the target, and every
/// example whose final knowledge message is the silence token.
FilterResult filter_entailed(const std::vector<TrainingExample>& examples, Classifier& gate);

// --- generation -----------------------------------------------------------

enum class SeedKind { Persona, Subtopic };

/// Per-domain seeds: one-clause role or subtopic descriptions.
class SeedBank {
 public:
  struct Entry {
    std::string text;
    std::string topic;
  };

  /// The built-in bank: 1000 distinct seeds for each of the six domains.
  static const SeedBank& standard();

  const std::vector<Entry>& seeds(std::string_view domain) const;
  SeedKind kind(std::string_view domain) const;
  std::optional<std::string> topic_of(std::string_view domain, std::string_view seed) const;

 private:
  struct Domain {
    std::string name;
    SeedKind kind;
    std::vector<Entry> entries;
  };
  const Domain& find(std::string_view domain) const;

  std::vector<Domain> domains_;
};

/// Deterministic template conversation with 8-12 turns. Each chunk contains
/// every content word of its phrase, so the lexical oracle accepts all pairs.
/// Throws UnknownDomain.
ConversationDocument template_generate(std::string_view domain, std::string_view seed, std::uint64_t rng_seed);

/// Prompt asking a model for a full conversation in one shot.
std::string conversation_prompt(std::string_view domain, std::string_view seed);
/// Prompt asking a model for short, general personas or subtopics.
std::string seed_prompt(std::string_view domain, std::size_t count);

/// Sends conversation_prompt to the backend, joins the streamed chunks and
/// parses the JSON object found in the reply. Throws GenerationError (stream
/// failure), ParseError or ValidationError (any violation, including length).
ConversationDocument llm_generate(std::string_view domain, std::string_view seed, Backend& backend, Clock& clock);

struct CorpusStats {
  std::size_t conversations = 0;
  std::size_t turns = 0;
  std::size_t examples = 0;
  std::size_t rejected = 0;

  double reject_rate() const;
  double turns_per_conversation() const;
  Json to_json() const;
};

}  // namespace infill
