// SPDX-License-Identifier: Apache-2.0

#include "infill/entailment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "infill/prompt_format.hpp"

namespace infill {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Entailment: return "entailment";
    case Label::Neutral: return "neutral";
    case Label::Contradiction: return "contradiction";
  }
  return "neutral";
}

Label label_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "entailment") return Label::Entailment;
  if (lower == "neutral") return Label::Neutral;
  if (lower == "contradiction") return Label::Contradiction;
  throw Error(ErrorCode::ClassifierUnavailable, "unknown label '" + std::string(s) + "'");
}

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",     "about",  "after",   "again",  "all",   "also",   "am",    "an",    "and",   "any",   "are",
      "as",    "at",     "be",      "been",   "being", "but",    "by",    "can",   "could", "did",   "do",
      "does",  "for",    "from",    "had",    "has",   "have",   "he",    "her",   "here",  "him",   "his",
      "how",   "i",      "id",      "if",     "im",    "in",     "into",  "is",    "it",    "its",   "ive",
      "just",  "let",    "lets",    "like",   "may",   "me",     "might", "must",  "my",    "now",   "of",
      "oh",    "ok",     "okay",    "on",     "or",    "our",    "out",   "over",  "really", "right", "shall",
      "she",   "should", "so",      "some",   "sure",  "than",   "that",  "thats", "the",   "their", "them",
      "then",  "there",  "these",   "they",   "this",  "those",  "to",    "too",   "um",    "uh",    "us",
      "very",  "was",    "we",      "well",   "were",  "what",   "when",  "where", "which", "who",   "whom",
      "whose", "why",    "will",    "with",   "would", "yes",    "you",   "your",  "youre", "hmm",   "indeed",
      "yeah",  "great",  "good",    "basically", "actually", "think", "see", "alright"};
  return words;
}

const std::unordered_set<std::string>& negation_words() {
  static const std::unordered_set<std::string> words = {
      "not",    "no",     "never",  "none",   "nobody", "nothing", "neither", "nor",    "nowhere",
      "cannot", "cant",   "dont",   "doesnt", "didnt",  "isnt",    "arent",   "wasnt",  "werent",
      "wont",   "wouldnt", "couldnt", "shouldnt", "hasnt", "havent", "hadnt", "mustnt", "aint"};
  return words;
}

const std::unordered_map<std::string, std::string>& antonyms() {
  static const auto table = [] {
    const std::array<std::pair<const char*, const char*>, 12> pairs = {{{"true", "false"},
                                                                        {"open", "closed"},
                                                                        {"alive", "dead"},
                                                                        {"win", "lose"},
                                                                        {"won", "lost"},
                                                                        {"correct", "incorrect"},
                                                                        {"possible", "impossible"},
                                                                        {"safe", "unsafe"},
                                                                        {"higher", "lower"},
                                                                        {"above", "below"},
                                                                        {"increase", "decrease"},
                                                                        {"allowed", "forbidden"}}};
    std::unordered_map<std::string, std::string> m;
    for (const auto& [a, b] : pairs) {
      m.emplace(a, b);
      m.emplace(b, a);
    }
    return m;
  }();
  return table;
}

}  // namespace

LexicalFeatures lexical_features(std::string_view text) {
  LexicalFeatures f;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    f.tokens.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (c == '\'') continue;
    if (c >= 0x80 || std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();

  std::unordered_set<std::string> seen;
  for (const auto& t : f.tokens) {
    if (negation_words().count(t)) {
      ++f.negations;
      continue;
    }
    if (stopwords().count(t)) continue;
    if (seen.insert(t).second) f.content.push_back(t);
  }
  return f;
}

EntailmentVerdict lexical_oracle(std::string_view premise, std::string_view hypothesis, double threshold) {
  const auto p = lexical_features(premise);
  const auto h = lexical_features(hypothesis);
  const std::unordered_set<std::string> premise_tokens(p.tokens.begin(), p.tokens.end());

  int antonym_flips = 0;
  for (const auto& w : std::unordered_set<std::string>(h.tokens.begin(), h.tokens.end())) {
    auto it = antonyms().find(w);
    if (it != antonyms().end() && premise_tokens.count(it->second) && !premise_tokens.count(w)) ++antonym_flips;
  }

  std::size_t found = 0;
  for (const auto& w : h.content) found += premise_tokens.count(w);
  const double overlap = h.content.empty() ? 1.0 : static_cast<double>(found) / static_cast<double>(h.content.size());

  const bool negation_mismatch = (p.negations % 2) != (h.negations % 2);
  const bool flipped = negation_mismatch != (antonym_flips % 2 == 1);
  if (flipped) return {Label::Contradiction, overlap};
  return {overlap >= threshold ? Label::Entailment : Label::Neutral, overlap};
}

EntailmentVerdict classify(std::string_view premise, std::string_view hypothesis, Classifier& classifier) {
  if (trim(premise).empty() || trim(hypothesis).empty()) {
    throw Error(ErrorCode::ValidationError, "premise and hypothesis must be non-empty");
  }
  auto v = classifier.classify(premise, hypothesis);
  if (!(v.score >= 0.0 && v.score <= 1.0)) {
    throw Error(ErrorCode::ClassifierUnavailable, classifier.name() + " returned a score outside [0, 1]");
  }
  return v;
}

void EntailmentTally::add(Label label) {
  switch (label) {
    case Label::Entailment: ++entailment; break;
    case Label::Neutral: ++neutral; break;
    case Label::Contradiction: ++contradiction; break;
  }
}

double EntailmentTally::percent(Label label) const {
  const auto n = judged();
  if (n == 0) return 0.0;
  std::size_t count = label == Label::Entailment ? entailment : label == Label::Neutral ? neutral : contradiction;
  return 100.0 * static_cast<double>(count) / static_cast<double>(n);
}

EntailmentTally& EntailmentTally::operator+=(const EntailmentTally& other) {
  entailment += other.entailment;
  neutral += other.neutral;
  contradiction += other.contradiction;
  skipped += other.skipped;
  return *this;
}

std::string turn_premise(const TurnTranscript& transcript, std::size_t index) {
  std::string premise = transcript.events().at(index).text;
  for (std::size_t j = 0; j < index; ++j) {
    premise += ' ';
    premise += transcript.phrases()[j].text;
  }
  return premise;
}

TurnEntailmentReport verify_turn(const TurnTranscript& transcript, Classifier& classifier) {
  TurnEntailmentReport report;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    if (transcript.events()[i].kind == EventKind::Silence) {
      ++report.tally.skipped;
      continue;
    }
    JudgedPair pair;
    pair.phrase_seq = i;
    pair.premise = turn_premise(transcript, i);
    pair.hypothesis = transcript.phrases()[i].text;
    try {
      pair.verdict = classify(pair.premise, pair.hypothesis, classifier);
    } catch (const Error& e) {
      throw PartialReportError(e, std::move(report));
    }
    report.tally.add(pair.verdict.label);
    report.pairs.push_back(std::move(pair));
  }
  return report;
}

DatasetTurnVerdict verify_dataset_turn(std::string_view /*user*/, const std::vector<std::string>& thoughts,
                                       const std::vector<std::string>& phrases, Classifier& classifier) {
  if (thoughts.size() != phrases.size()) {
    throw Error(ErrorCode::AlignmentError, std::to_string(thoughts.size()) + " thoughts vs " +
                                               std::to_string(phrases.size()) + " phrases");
  }
  DatasetTurnVerdict out;
  for (std::size_t i = 0; i < thoughts.size(); ++i) {
    DatasetPairVerdict pair;
    if (thoughts[i] == kSilenceToken) {
      pair.exempt = true;
      pair.accepted = true;
    } else {
      pair.verdict = classify(thoughts[i], phrases[i], classifier);
      pair.accepted = pair.verdict->label == Label::Entailment;
    }
    out.accepted = out.accepted && pair.accepted;
    out.pairs.push_back(pair);
  }
  return out;
}

}  // namespace infill
