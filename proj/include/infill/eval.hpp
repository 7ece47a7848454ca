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
#include "infill/turn_engine.hpp"

namespace infill {

/// One question with its acceptable answers. Item files hold one JSON object
/// per line: {"id": str, "question": str, "answers": [str...]}.
struct QAItem {
  std::string id;
  std::string question;
  std::vector<std::string> gold_answers;
};

/// Throws ParseError for malformed lines and ValidationError for items with
/// no usable answer. Blank lines are ignored.
std::vector<QAItem> parse_items(std::string_view jsonl);
std::vector<QAItem> load_items(const std::string& path);

/// Lowercase, punctuation and articles removed, whitespace collapsed.
std::string normalize_answer(std::string_view text);
/// True iff some normalized gold answer occurs in the normalized response.
bool score_answer(std::string_view response, const std::vector<std::string>& gold_answers);

/// Uniform sample of `count` items in sampled order (Fisher-Yates over
/// mt19937_64 with rejection). Returns every item shuffled when count >= size.
std::vector<QAItem> sample_items(const std::vector<QAItem>& items, std::size_t count, std::uint64_t seed);

enum class SystemMode {
  Runtime,      // backend + infill through the turn engine
  BackendOnly,  // the backend answering alone; TTFT at its first output
  InfillOnly,   // the small model alone, conditioned on the question and a silence
};

std::string_view to_string(SystemMode mode);
/// Accepts "runtime", "backend_only", "infill_only". Throws InvalidConfig.
SystemMode system_mode_from_string(std::string_view text);

/// What is being measured. The backend is unused in InfillOnly mode and the
/// infill is unused in BackendOnly mode.
struct SystemUnderTest {
  SystemMode mode = SystemMode::Runtime;
  Backend* backend = nullptr;
  Infill* infill = nullptr;
  Clock* clock = nullptr;
  SilencePolicy policy;
  /// Judges runtime transcripts when set.
  Classifier* classifier = nullptr;
  std::string label = "system";
};

struct Measurement {
  Duration ttft{};
  std::string response;
  std::optional<TurnTranscript> transcript;
};

/// Runs one single-turn question and returns the interval from dispatch to
/// the first emitted response character. Throws Timeout when nothing is
/// emitted within `timeout`, and the adapters' errors otherwise.
Measurement measure(const SystemUnderTest& system, const std::string& question, Duration timeout);
Duration measure_ttft(const SystemUnderTest& system, const std::string& question,
                      Duration timeout = std::chrono::seconds(60));

struct EvalRecord {
  std::string id;
  std::optional<double> ttft_seconds;
  std::string response;
  std::optional<bool> correct;
  std::optional<EntailmentTally> entailment;
  std::optional<std::string> error;
};

struct EvalOptions {
  Duration timeout = std::chrono::seconds(60);
  /// Evaluate a random subset of this size; all items in file order when unset.
  std::optional<std::size_t> sample;
  std::uint64_t sampling_seed = 0;
};

struct EvalReport {
  std::string system;
  std::string mode;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t errors = 0;
  double accuracy = 0;
  double ttft_mean = 0;
  double ttft_std = 0;
  std::optional<EntailmentTally> entailment;
  std::vector<EvalRecord> records;
};

/// Evaluates every item as a fresh single-turn conversation. Item errors are
/// recorded and the run continues; throws the last error if every item fails.
EvalReport run_eval(const SystemUnderTest& system, const std::vector<QAItem>& items, const EvalOptions& options = {});

Json to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);
/// Fixed-width terminal table of the headline metrics.
std::string format_table(const EvalReport& report);

struct MetricDelta {
  std::string metric;
  double a = 0;
  double b = 0;
  double delta = 0;  // b - a
};

/// Per-metric deltas b - a. Throws ItemSetMismatch unless both reports cover
/// the same item ids.
std::vector<MetricDelta> compare_report(const EvalReport& a, const EvalReport& b);
std::string format_deltas(const std::vector<MetricDelta>& deltas);

}  // namespace infill
