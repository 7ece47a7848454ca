// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "infill/error.hpp"
#include "infill/protocol.hpp"

namespace infill {

enum class Label { Entailment, Neutral, Contradiction };

std::string_view to_string(Label label);
Label label_from_string(std::string_view s);

struct EntailmentVerdict {
  Label label = Label::Neutral;
  /// Confidence for the chosen label, in [0, 1].
  double score = 0;

  bool operator==(const EntailmentVerdict&) const = default;
};

/// Premise -> hypothesis classifier (MNLI-style). Implementations must be
/// safe to call concurrently.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string name() const = 0;
  /// Throws ClassifierUnavailable.
  virtual EntailmentVerdict classify(std::string_view premise, std::string_view hypothesis) = 0;
};

/// Checks the preconditions and the returned verdict, then delegates.
EntailmentVerdict classify(std::string_view premise, std::string_view hypothesis, Classifier& classifier);

// Lexical oracle rule table, applied in order:
//   1. Normalize both texts: lowercase ASCII, drop apostrophes, turn other
//      punctuation into spaces, split on whitespace.
//   2. Polarity: count negation words in each text (parity), and count
//      hypothesis words whose antonym is in the premise while the word itself
//      is not (parity). If the negation parities differ XOR the antonym count
//      is odd, the verdict is Contradiction.
//   3. Overlap: the fraction of distinct hypothesis content words (not a
//      stopword, not a negation word) present in the premise. No content
//      words counts as overlap 1.
//   4. Overlap >= threshold gives Entailment, otherwise Neutral.
// The score is the overlap fraction for every label.
inline constexpr double kOracleThreshold = 0.7;

struct LexicalFeatures {
  std::vector<std::string> tokens;
  std::vector<std::string> content;  // distinct, in first-seen order
  int negations = 0;
};

LexicalFeatures lexical_features(std::string_view text);
EntailmentVerdict lexical_oracle(std::string_view premise, std::string_view hypothesis,
                                 double threshold = kOracleThreshold);

/// Deterministic offline stand-in for an NLI model. It makes no claim of NLI
/// fidelity.
class LexicalOracle final : public Classifier {
 public:
  explicit LexicalOracle(double threshold = kOracleThreshold) : threshold_(threshold) {}
  std::string name() const override { return "lexical-oracle"; }
  EntailmentVerdict classify(std::string_view premise, std::string_view hypothesis) override {
    return lexical_oracle(premise, hypothesis, threshold_);
  }

 private:
  double threshold_;
};

struct HttpClassifierConfig {
  std::string url;
  int max_in_flight = 4;
  double timeout_seconds = 30;
};

/// Client for a classification endpoint:
///   request  {"premise": str, "hypothesis": str}
///   response {"label": "entailment"|"neutral"|"contradiction",
///             "scores": [p_entailment, p_neutral, p_contradiction]}
/// Scores must sum to 1 within 1e-6.
class HttpClassifier final : public Classifier {
 public:
  explicit HttpClassifier(HttpClassifierConfig config);
  std::string name() const override { return "http:" + config_.url; }
  EntailmentVerdict classify(std::string_view premise, std::string_view hypothesis) override;

 private:
  HttpClassifierConfig config_;
  std::counting_semaphore<1024> in_flight_;
};

/// Parses an endpoint response body. Throws ClassifierUnavailable.
EntailmentVerdict parse_classifier_response(std::string_view body);

struct JudgedPair {
  std::size_t phrase_seq = 0;
  std::string premise;
  std::string hypothesis;
  EntailmentVerdict verdict;
};

struct EntailmentTally {
  std::size_t entailment = 0;
  std::size_t neutral = 0;
  std::size_t contradiction = 0;
  std::size_t skipped = 0;

  std::size_t judged() const { return entailment + neutral + contradiction; }
  void add(Label label);
  /// Share of judged pairs in percent; 0 when nothing was judged.
  double percent(Label label) const;
  EntailmentTally& operator+=(const EntailmentTally& other);
};

struct TurnEntailmentReport {
  std::vector<JudgedPair> pairs;
  EntailmentTally tally;
};

/// Thrown by verify_turn when the classifier fails midway.
class PartialReportError : public Error {
 public:
  PartialReportError(const Error& cause, TurnEntailmentReport partial)
      : Error(ErrorCode::ClassifierUnavailable, std::string(cause.what())), partial_(std::move(partial)) {}
  const TurnEntailmentReport& partial() const { return partial_; }

 private:
  TurnEntailmentReport partial_;
};

/// Judges every chunk-conditioned phrase c_i against the premise
/// "chunk_i c_0 ... c_{i-1}" (space-joined). Silence-conditioned phrases are
/// counted as skipped.
TurnEntailmentReport verify_turn(const TurnTranscript& transcript, Classifier& classifier);
std::string turn_premise(const TurnTranscript& transcript, std::size_t index);

struct DatasetPairVerdict {
  bool exempt = false;  // silence-conditioned
  bool accepted = false;
  std::optional<EntailmentVerdict> verdict;
};

struct DatasetTurnVerdict {
  std::vector<DatasetPairVerdict> pairs;
  bool accepted = true;
};

/// Dataset filter rule: a pair passes iff its thought is the silence token or
/// the thought entails the phrase; the turn passes iff all pairs pass.
DatasetTurnVerdict verify_dataset_turn(std::string_view user, const std::vector<std::string>& thoughts,
                                       const std::vector<std::string>& phrases, Classifier& classifier);

}  // namespace infill
