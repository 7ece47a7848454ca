#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "infill/error.hpp"
#include "infill/eval.hpp"
#include "sim_oracle.hpp"

using namespace infill;
using namespace std::chrono_literals;

namespace {

std::vector<QAItem> fixture_items() { return load_items(std::string(INFILL_FIXTURES) + "/qa_items.jsonl"); }

std::string last_user(const DialogueHistory& h) { return h.messages().back().text; }

/// Backend that answers every question with its first gold answer as a
/// complete sentence after `delay` seconds.
ScriptedBackend gold_backend(const std::vector<QAItem>& items, double delay = 0.5) {
  std::map<std::string, std::string> gold;
  for (const auto& it : items) gold[it.question] = it.gold_answers.front();
  return ScriptedBackend(
      [gold, delay](const DialogueHistory& h) {
        ScriptedSchedule s;
        s.chunks.push_back({delay, "The answer is " + gold.at(last_user(h)) + "."});
        s.close_delay_seconds = 0.1;
        return s;
      },
      "gold");
}

ScriptedSchedule single_chunk(double delay, std::string text) {
  ScriptedSchedule s;
  s.chunks.push_back({delay, std::move(text)});
  s.close_delay_seconds = 0.1;
  return s;
}

}  // namespace

TEST_CASE("answer normalization rule table") {
  CHECK(score_answer("It's Mount Everest, of course.", {"Mount Everest"}));
  CHECK_FALSE(score_answer("I'm not sure.", {"Everest"}));
  CHECK_FALSE(score_answer("the theatre opened", {"theater"}));
  CHECK(normalize_answer("  The  Quick, brown FOX! ") == "quick brown fox");
  CHECK(normalize_answer("an apple a day") == "apple day");
  CHECK(score_answer("Jack Nicklaus won 18.", {"Tiger Woods", "Jack Nicklaus"}));
  // Articles are stripped from gold answers too.
  CHECK(score_answer("the Pacific ocean", {"The Pacific Ocean"}));
  // Gold answers that normalize to nothing never match.
  CHECK_FALSE(score_answer("anything", {"the"}));
}

TEST_CASE("property: scoring ignores casing and punctuation") {
  std::mt19937 rng(5);
  const std::string punct = ".,!?;:'\"()";
  auto items = fixture_items();
  for (int trial = 0; trial < 2000; ++trial) {
    const auto& item = items[rng() % items.size()];
    std::string base = rng() % 2 ? "well it is " + item.gold_answers.front() + " i think" : "no idea at all";
    std::string noisy;
    for (char c : base) {
      if (rng() % 6 == 0) noisy.push_back(punct[rng() % punct.size()]);
      noisy.push_back(rng() % 2 ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
    }
    CHECK(score_answer(noisy, item.gold_answers) == score_answer(base, item.gold_answers));
  }
}

TEST_CASE("item files") {
  auto items = fixture_items();
  CHECK(items.size() == 20);
  CHECK(items[0].id == "q01");
  CHECK_THROWS_AS(parse_items("{\"id\":\"x\",\"question\":\"q\",\"answers\":[\" \"]}"), Error);
  CHECK_THROWS_AS(parse_items("not json"), Error);
  CHECK(parse_items("\n\n").empty());
  try {
    parse_items("{\"id\":\"x\",\"question\":\"q\",\"answers\":[]}");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ValidationError);
  }
}

TEST_CASE("sampling is a deterministic subset without repeats") {
  auto items = fixture_items();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto a = sample_items(items, 7, seed);
    auto b = sample_items(items, 7, seed);
    REQUIRE(a.size() == 7);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].id == b[i].id);
      ids.insert(a[i].id);
    }
    CHECK(ids.size() == 7);
  }
  CHECK(sample_items(items, 100, 1).size() == 20);
  // Every item is reachable in first position across seeds.
  std::set<std::string> firsts;
  for (std::uint64_t seed = 0; seed < 400; ++seed) firsts.insert(sample_items(items, 1, seed)[0].id);
  CHECK(firsts.size() == 20);
}

TEST_CASE("ttft per system mode in virtual time") {
  VirtualClock clock;
  ScriptedInfill infill(0.16);
  SUBCASE("backend only measures its first output") {
    ScriptedBackend backend(single_chunk(2.16, "Paris is the capital."));
    SystemUnderTest sut{SystemMode::BackendOnly, &backend, nullptr, &clock, {}, nullptr, "b"};
    CHECK(measure_ttft(sut, "q") == 2'160'000us);
  }
  SUBCASE("instant mode answers after the infill latency") {
    ScriptedBackend backend(single_chunk(10.9, "Paris is the capital."));
    SystemUnderTest sut{SystemMode::Runtime, &backend, &infill, &clock, {0.0, 3}, nullptr, "r"};
    CHECK(measure_ttft(sut, "q") == 160'000us);
  }
  SUBCASE("one second cadence adds the period") {
    ScriptedBackend backend(single_chunk(10.9, "Paris is the capital."));
    SystemUnderTest sut{SystemMode::Runtime, &backend, &infill, &clock, {1.0, 3}, nullptr, "r"};
    CHECK(measure_ttft(sut, "q") == 1'160'000us);
  }
  SUBCASE("zero latency equals the first event timestamp") {
    ScriptedInfill instant(0.0);
    ScriptedBackend backend(single_chunk(0.4, "Paris is the capital."));
    SystemUnderTest sut{SystemMode::Runtime, &backend, &instant, &clock, {1.0, 3}, nullptr, "r"};
    auto m = measure(sut, "q", 60s);
    REQUIRE(m.transcript);
    CHECK(m.ttft == m.transcript->events().front().timestamp);
    CHECK(m.ttft == 400'000us);
  }
  SUBCASE("infill only") {
    SystemUnderTest sut{SystemMode::InfillOnly, nullptr, &infill, &clock, {}, nullptr, "i"};
    auto m = measure(sut, "q", 60s);
    CHECK(m.ttft == 160'000us);
    CHECK(m.response == "One moment.");
  }
  SUBCASE("timeout ceiling") {
    ScriptedBackend backend(single_chunk(61.0, "late."));
    SystemUnderTest sut{SystemMode::BackendOnly, &backend, nullptr, &clock, {}, nullptr, "b"};
    try {
      measure_ttft(sut, "q");
      FAIL("expected timeout");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Timeout);
    }
    ScriptedInfill slow(2.0);
    SystemUnderTest rt{SystemMode::Runtime, &backend, &slow, &clock, {1.0, 3}, nullptr, "r"};
    CHECK_THROWS_AS(measure_ttft(rt, "q", 1s), Error);
  }
}

TEST_CASE("property: runtime ttft equals the oracle's first phrase time") {
  std::mt19937 rng(21);
  VirtualClock clock;
  for (int trial = 0; trial < 300; ++trial) {
    const std::int64_t first_ms = 10 * static_cast<std::int64_t>(rng() % 400);
    const std::int64_t period_ms = 10 * static_cast<std::int64_t>(rng() % 150);
    const std::int64_t latency_ms = 10 * static_cast<std::int64_t>(rng() % 30);
    auto sim = oracle::simulate({first_ms}, first_ms + 100, period_ms, 3, latency_ms);
    ScriptedInfill infill(static_cast<double>(latency_ms) / 1000.0);
    ScriptedBackend backend(single_chunk(static_cast<double>(first_ms) / 1000.0, "A fact."));
    SystemUnderTest sut{SystemMode::Runtime, &backend, &infill, &clock,
                        {static_cast<double>(period_ms) / 1000.0, 3}, nullptr, "r"};
    CHECK(measure_ttft(sut, "q") == std::chrono::milliseconds(sim.phrase_ms.front()));
  }
}

TEST_CASE("accuracy plumbing: gold backend vs canned base model") {
  auto items = fixture_items();
  VirtualClock clock;
  auto backend = gold_backend(items);
  ScriptedInfill echo(0.16);
  ScriptedInfill base(0.16, ScriptedInfill::canned("I don't know."));
  LexicalOracle oracle;
  SystemUnderTest full{SystemMode::Runtime, &backend, &echo, &clock, {1.0, 3}, &oracle, "full"};
  SystemUnderTest weak{SystemMode::Runtime, &backend, &base, &clock, {1.0, 3}, nullptr, "base"};

  auto a = run_eval(weak, items);
  auto b = run_eval(full, items);
  CHECK(a.accuracy == 0.0);
  CHECK(b.accuracy == 1.0);
  CHECK(b.n == b.correct + b.incorrect + b.errors);
  REQUIRE(b.entailment);
  CHECK(b.entailment->percent(Label::Entailment) == 100.0);
  CHECK(b.entailment->skipped == 0);
  auto deltas = compare_report(a, b);
  CHECK(deltas[0].metric == "accuracy");
  CHECK(deltas[0].delta == 1.0);

  SUBCASE("unrelated backend scores zero") {
    ScriptedBackend off(single_chunk(0.5, "Bananas are yellow."));
    SystemUnderTest sut{SystemMode::Runtime, &off, &echo, &clock, {1.0, 3}, nullptr, "off"};
    CHECK(run_eval(sut, items).accuracy == 0.0);
  }
  SUBCASE("backend only also answers correctly") {
    SystemUnderTest sut{SystemMode::BackendOnly, &backend, nullptr, &clock, {}, nullptr, "backend"};
    auto r = run_eval(sut, items);
    CHECK(r.accuracy == 1.0);
    CHECK(r.ttft_mean == doctest::Approx(0.5));
    CHECK(r.ttft_std == doctest::Approx(0.0));
    CHECK_FALSE(r.entailment);
  }
}

TEST_CASE("population statistics over hand-picked ttfts") {
  auto items = fixture_items();
  items.resize(4);
  const std::map<std::string, double> delay = {{items[0].question, 0.1}, {items[1].question, 0.1},
                                               {items[2].question, 0.2}, {items[3].question, 0.2}};
  ScriptedBackend backend([delay](const DialogueHistory& h) { return single_chunk(delay.at(last_user(h)), "x."); },
                          "timed");
  VirtualClock clock;
  SystemUnderTest sut{SystemMode::BackendOnly, &backend, nullptr, &clock, {}, nullptr, "timed"};
  auto r = run_eval(sut, items);
  CHECK(r.ttft_mean == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(r.ttft_std == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("item errors are recorded and the run continues") {
  auto items = fixture_items();
  std::set<std::string> failing = {items[3].question, items[7].question};
  std::map<std::string, std::string> gold;
  for (const auto& it : items) gold[it.question] = it.gold_answers.front();
  ScriptedBackend backend(
      [&](const DialogueHistory& h) {
        auto q = last_user(h);
        if (failing.count(q)) {
          ScriptedSchedule s;
          s.failure = "overloaded";
          return s;
        }
        return single_chunk(0.3, gold.at(q) + " it is.");
      },
      "flaky");
  VirtualClock clock;
  ScriptedInfill echo(0.1);
  SystemUnderTest sut{SystemMode::Runtime, &backend, &echo, &clock, {1.0, 3}, nullptr, "flaky"};
  auto r = run_eval(sut, items);
  CHECK(r.errors == 2);
  CHECK(r.correct == 18);
  CHECK(r.n == r.correct + r.incorrect + r.errors);
  CHECK(r.accuracy == doctest::Approx(0.9));
  for (const auto& rec : r.records) CHECK(rec.correct.has_value() != rec.error.has_value());

  SUBCASE("all items failing aborts") {
    for (const auto& it : items) failing.insert(it.question);
    CHECK_THROWS_AS(run_eval(sut, items), Error);
  }
}

TEST_CASE("reports are byte-identical across reruns and round-trip") {
  auto items = fixture_items();
  EvalOptions opts;
  opts.sample = 10;
  opts.sampling_seed = 99;
  std::string first;
  for (int run = 0; run < 2; ++run) {
    VirtualClock clock;
    auto backend = gold_backend(items, 0.7);
    ScriptedInfill echo(0.2);
    LexicalOracle oracle;
    SystemUnderTest sut{SystemMode::Runtime, &backend, &echo, &clock, {1.0, 3}, &oracle, "full"};
    auto dump = to_json(run_eval(sut, items, opts)).dump(2);
    if (run == 0) first = dump;
    CHECK(dump == first);
  }
  auto parsed = report_from_json(Json::parse(first));
  CHECK(to_json(parsed).dump(2) == first);
  CHECK(first.find("population") != std::string::npos);
  CHECK(first.find("first emitted character") != std::string::npos);
  CHECK(format_table(parsed).find("full") != std::string::npos);
}

TEST_CASE("compare_report") {
  EvalReport a;
  a.records = {{"x", 0.1, "", true, std::nullopt, std::nullopt}, {"y", 0.1, "", false, std::nullopt, std::nullopt}};
  a.accuracy = 0.10;
  auto b = a;
  for (const auto& d : compare_report(a, a)) CHECK(d.delta == 0.0);
  b.accuracy = 0.46;
  CHECK(compare_report(a, b)[0].delta == doctest::Approx(0.36));
  CHECK(format_deltas(compare_report(a, b)).find("+0.3600") != std::string::npos);
  b.records[1].id = "z";
  try {
    compare_report(a, b);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ItemSetMismatch);
  }
}
