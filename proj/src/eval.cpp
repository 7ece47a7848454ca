// SPDX-License-Identifier: Apache-2.0

#include "infill/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "infill/prompt_format.hpp"

namespace infill {

namespace {

constexpr std::string_view kMetric = "normalized substring containment over gold answers";
constexpr std::string_view kStd = "population";
constexpr std::string_view kTtftBoundary = "first emitted character of the first phrase";

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace

std::vector<QAItem> parse_items(std::string_view jsonl) {
  std::vector<QAItem> items;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    QAItem item;
    try {
      auto j = Json::parse(line);
      item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      item.question = j.at("question").get<std::string>();
      item.gold_answers = j.at("answers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + ex.what());
    }
    std::erase_if(item.gold_answers, [](const std::string& a) { return trim(a).empty(); });
    if (item.gold_answers.empty()) {
      throw Error(ErrorCode::ValidationError, "item " + item.id + " has no non-blank answers");
    }
    if (trim(item.question).empty()) throw Error(ErrorCode::ValidationError, "item " + item.id + " has no question");
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<QAItem> load_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_items(ss.str());
}

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
  }
  std::string out;
  std::istringstream words(cleaned);
  std::string w;
  while (words >> w) {
    if (is_article(w)) continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

bool score_answer(std::string_view response, const std::vector<std::string>& gold_answers) {
  const auto norm = normalize_answer(response);
  return std::any_of(gold_answers.begin(), gold_answers.end(), [&](const std::string& g) {
    auto ng = normalize_answer(g);
    return !ng.empty() && norm.find(ng) != std::string::npos;
  });
}

std::vector<QAItem> sample_items(const std::vector<QAItem>& items, std::size_t count, std::uint64_t seed) {
  std::vector<QAItem> pool = items;
  std::mt19937_64 rng(seed);
  // Unbiased integer in [0, bound) by rejecting the short final block.
  auto below = [&rng](std::uint64_t bound) {
    const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % bound + 1) % bound;
    std::uint64_t x;
    do {
      x = rng();
    } while (x > limit);
    return x % bound;
  };
  const std::size_t k = std::min(count, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::string_view to_string(SystemMode mode) {
  switch (mode) {
    case SystemMode::Runtime: return "runtime";
    case SystemMode::BackendOnly: return "backend_only";
    case SystemMode::InfillOnly: return "infill_only";
  }
  return "runtime";
}

SystemMode system_mode_from_string(std::string_view text) {
  if (text == "runtime") return SystemMode::Runtime;
  if (text == "backend_only") return SystemMode::BackendOnly;
  if (text == "infill_only") return SystemMode::InfillOnly;
  throw Error(ErrorCode::InvalidConfig, "unknown system mode '" + std::string(text) + "'");
}

namespace {

Measurement measure_runtime(const SystemUnderTest& system, const std::string& question) {
  auto outcome = run_turn(question, *system.backend, *system.infill, *system.clock, system.policy);
  if (outcome.backend_error) throw *outcome.backend_error;
  const auto& t = outcome.transcript;
  if (!t.ttft()) throw Error(ErrorCode::Timeout, "no phrase was emitted");
  return Measurement{*t.ttft(), t.joined_phrases(), t};
}

Measurement measure_backend(const SystemUnderTest& system, const std::string& question, Duration timeout) {
  OffsetClock clock(*system.clock);
  DialogueHistory history;
  history.append_user(question);
  KnowledgeQueue queue;
  auto stream = system.backend->start_turn(history, queue, clock);
  std::string response;
  bool any = false;
  for (;;) {
    auto taken = queue.take_until(clock, any ? kNever : timeout);
    if (auto* chunk = std::get_if<KnowledgeQueue::Chunk>(&taken)) {
      if (any) response.push_back(' ');
      response += chunk->text;
      any = true;
      continue;
    }
    if (std::holds_alternative<KnowledgeQueue::Timeout>(taken)) {
      stream->cancel();
      throw Error(ErrorCode::Timeout, "backend produced no output within " + std::to_string(to_seconds(timeout)) + " s");
    }
    const auto& closed = std::get<KnowledgeQueue::Closed>(taken);
    if (closed.error) throw *closed.error;
    break;
  }
  auto first = queue.first_output();
  if (!any || !first) throw Error(ErrorCode::Timeout, "backend closed without output");
  return Measurement{*first, response, std::nullopt};
}

Measurement measure_infill(const SystemUnderTest& system, const std::string& question) {
  OffsetClock clock(*system.clock);
  auto state = TurnState::open(question);
  state.append_event(EventKind::Silence, "", Duration::zero());
  auto g = system.infill->generate(render_context(state), clock);
  return Measurement{g.first_output, g.text, std::nullopt};
}

}  // namespace

Measurement measure(const SystemUnderTest& system, const std::string& question, Duration timeout) {
  if (system.clock == nullptr) throw Error(ErrorCode::InvalidConfig, "system has no clock");
  if (system.mode != SystemMode::InfillOnly && system.backend == nullptr) {
    throw Error(ErrorCode::InvalidConfig, "system has no backend");
  }
  if (system.mode != SystemMode::BackendOnly && system.infill == nullptr) {
    throw Error(ErrorCode::InvalidConfig, "system has no infill model");
  }
  Measurement m;
  switch (system.mode) {
    case SystemMode::Runtime: m = measure_runtime(system, question); break;
    case SystemMode::BackendOnly: m = measure_backend(system, question, timeout); break;
    case SystemMode::InfillOnly: m = measure_infill(system, question); break;
  }
  if (m.ttft > timeout) {
    throw Error(ErrorCode::Timeout, "first output after " + std::to_string(to_seconds(m.ttft)) + " s");
  }
  return m;
}

Duration measure_ttft(const SystemUnderTest& system, const std::string& question, Duration timeout) {
  return measure(system, question, timeout).ttft;
}

EvalReport run_eval(const SystemUnderTest& system, const std::vector<QAItem>& items, const EvalOptions& options) {
  if (items.empty()) throw Error(ErrorCode::ValidationError, "no items to evaluate");
  const auto chosen = options.sample ? sample_items(items, *options.sample, options.sampling_seed) : items;

  EvalReport report;
  report.system = system.label;
  report.mode = std::string(to_string(system.mode));
  report.n = chosen.size();
  if (system.classifier != nullptr && system.mode == SystemMode::Runtime) report.entailment = EntailmentTally{};

  std::optional<Error> last_error;
  std::vector<double> ttfts;
  for (const auto& item : chosen) {
    EvalRecord record;
    record.id = item.id;
    try {
      auto m = measure(system, item.question, options.timeout);
      std::optional<EntailmentTally> tally;
      if (report.entailment && m.transcript) tally = verify_turn(*m.transcript, *system.classifier).tally;
      record.ttft_seconds = to_seconds(m.ttft);
      record.response = m.response;
      record.correct = score_answer(m.response, item.gold_answers);
      record.entailment = tally;
    } catch (const Error& e) {
      record = EvalRecord{item.id, std::nullopt, "", std::nullopt, std::nullopt, e.what()};
      last_error = e;
    }
    if (record.error) {
      ++report.errors;
    } else {
      ttfts.push_back(*record.ttft_seconds);
      ++(*record.correct ? report.correct : report.incorrect);
      if (record.entailment) *report.entailment += *record.entailment;
    }
    report.records.push_back(std::move(record));
  }

  if (report.errors == report.n) {
    throw Error(last_error->code(), "every item failed; last: " + std::string(last_error->what()));
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.n);
  double sum = 0;
  for (double t : ttfts) sum += t;
  report.ttft_mean = sum / static_cast<double>(ttfts.size());
  double sq = 0;
  for (double t : ttfts) sq += (t - report.ttft_mean) * (t - report.ttft_mean);
  report.ttft_std = std::sqrt(sq / static_cast<double>(ttfts.size()));
  return report;
}

namespace {

Json tally_json(const EntailmentTally& t) {
  Json j;
  j["entailment"] = t.entailment;
  j["neutral"] = t.neutral;
  j["contradiction"] = t.contradiction;
  j["skipped"] = t.skipped;
  j["entailment_pct"] = t.percent(Label::Entailment);
  j["neutral_pct"] = t.percent(Label::Neutral);
  j["contradiction_pct"] = t.percent(Label::Contradiction);
  return j;
}

EntailmentTally tally_from(const Json& j) {
  EntailmentTally t;
  t.entailment = j.at("entailment").get<std::size_t>();
  t.neutral = j.at("neutral").get<std::size_t>();
  t.contradiction = j.at("contradiction").get<std::size_t>();
  t.skipped = j.at("skipped").get<std::size_t>();
  return t;
}

}  // namespace

Json to_json(const EvalReport& report) {
  Json j;
  j["header"] = {{"metric", kMetric}, {"std", kStd}, {"ttft_boundary", kTtftBoundary}};
  j["system"] = report.system;
  j["mode"] = report.mode;
  j["n"] = report.n;
  j["correct"] = report.correct;
  j["incorrect"] = report.incorrect;
  j["errors"] = report.errors;
  j["accuracy"] = report.accuracy;
  j["ttft_mean"] = report.ttft_mean;
  j["ttft_std"] = report.ttft_std;
  if (report.entailment) j["entailment"] = tally_json(*report.entailment);
  j["records"] = Json::array();
  for (const auto& r : report.records) {
    Json rec;
    rec["id"] = r.id;
    if (r.error) {
      rec["error"] = *r.error;
    } else {
      rec["ttft"] = *r.ttft_seconds;
      rec["response"] = r.response;
      rec["correct"] = *r.correct;
      if (r.entailment) rec["entailment"] = tally_json(*r.entailment);
    }
    j["records"].push_back(std::move(rec));
  }
  return j;
}

EvalReport report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.system = j.at("system").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.correct = j.at("correct").get<std::size_t>();
    r.incorrect = j.at("incorrect").get<std::size_t>();
    r.errors = j.at("errors").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.ttft_mean = j.at("ttft_mean").get<double>();
    r.ttft_std = j.at("ttft_std").get<double>();
    if (j.contains("entailment")) r.entailment = tally_from(j.at("entailment"));
    for (const auto& rec : j.at("records")) {
      EvalRecord e;
      e.id = rec.at("id").get<std::string>();
      if (rec.contains("error")) {
        e.error = rec.at("error").get<std::string>();
      } else {
        e.ttft_seconds = rec.at("ttft").get<double>();
        e.response = rec.at("response").get<std::string>();
        e.correct = rec.at("correct").get<bool>();
        if (rec.contains("entailment")) e.entailment = tally_from(rec.at("entailment"));
      }
      r.records.push_back(std::move(e));
    }
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

std::string format_table(const EvalReport& report) {
  char buf[512];
  std::string out;
  const int width = static_cast<int>(std::clamp<std::size_t>(report.system.size(), 14, 128));
  std::snprintf(buf, sizeof buf, "%-*s %-14s %5s %9s %10s %9s\n", width, "system", "mode", "n", "accuracy",
                "ttft_mean", "ttft_std");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-*s %-14s %5zu %9.4f %10.4f %9.4f\n", width, report.system.c_str(),
                report.mode.c_str(), report.n, report.accuracy, report.ttft_mean, report.ttft_std);
  out += buf;
  if (report.entailment) {
    const auto& t = *report.entailment;
    std::snprintf(buf, sizeof buf, "entailment %.2f%%  neutral %.2f%%  contradiction %.2f%%  (judged %zu, skipped %zu)\n",
                  t.percent(Label::Entailment), t.percent(Label::Neutral), t.percent(Label::Contradiction), t.judged(),
                  t.skipped);
    out += buf;
  }
  if (report.errors > 0) out += "errors: " + std::to_string(report.errors) + "\n";
  return out;
}

std::vector<MetricDelta> compare_report(const EvalReport& a, const EvalReport& b) {
  auto ids = [](const EvalReport& r) {
    std::multiset<std::string> s;
    for (const auto& rec : r.records) s.insert(rec.id);
    return s;
  };
  if (ids(a) != ids(b)) throw Error(ErrorCode::ItemSetMismatch, "reports cover different item ids");
  std::vector<MetricDelta> out;
  auto add = [&out](std::string name, double x, double y) { out.push_back({std::move(name), x, y, y - x}); };
  add("accuracy", a.accuracy, b.accuracy);
  add("ttft_mean", a.ttft_mean, b.ttft_mean);
  add("ttft_std", a.ttft_std, b.ttft_std);
  if (a.entailment && b.entailment) {
    add("entailment_pct", a.entailment->percent(Label::Entailment), b.entailment->percent(Label::Entailment));
    add("neutral_pct", a.entailment->percent(Label::Neutral), b.entailment->percent(Label::Neutral));
    add("contradiction_pct", a.entailment->percent(Label::Contradiction),
        b.entailment->percent(Label::Contradiction));
  }
  return out;
}

std::string format_deltas(const std::vector<MetricDelta>& deltas) {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-18s %10s %10s %10s\n", "metric", "a", "b", "delta");
  out += buf;
  for (const auto& d : deltas) {
    std::snprintf(buf, sizeof buf, "%-18s %10.4f %10.4f %+10.4f\n", d.metric.c_str(), d.a, d.b, d.delta);
    out += buf;
  }
  return out;
}

}  // namespace infill
