#include <doctest.h>

#include <random>
#include <thread>

#include "infill/error.hpp"
#include "infill/prompt_format.hpp"
#include "infill/turn_engine.hpp"
#include "sim_oracle.hpp"

using namespace infill;
using namespace std::chrono_literals;

namespace {

ScriptedSchedule schedule(std::vector<std::pair<double, std::string>> chunks, double close_delay = 0) {
  ScriptedSchedule s;
  for (auto& [d, t] : chunks) s.chunks.push_back({d, t});
  s.close_delay_seconds = close_delay;
  return s;
}

std::vector<std::pair<EventKind, Duration>> shape(const TurnTranscript& t) {
  std::vector<std::pair<EventKind, Duration>> out;
  for (const auto& e : t.events()) out.emplace_back(e.kind, e.timestamp);
  return out;
}

}  // namespace

TEST_CASE("next_event: silence fires on the cadence of an empty open queue") {
  VirtualClock clock;
  KnowledgeQueue queue;
  queue.close(10s);  // far in the future: the stream is still open at t=1
  auto e = next_event(queue, clock, SilencePolicy{}, 0ms, 0);
  REQUIRE(std::holds_alternative<KnowledgeEvent>(e));
  CHECK(std::get<KnowledgeEvent>(e).kind == EventKind::Silence);
  CHECK(std::get<KnowledgeEvent>(e).timestamp == 1s);
  CHECK(clock.now() == 1s);
}

TEST_CASE("next_event: a pending chunk preempts the cadence") {
  VirtualClock clock;
  KnowledgeQueue queue;
  queue.push("A.", 400ms);
  clock.sleep_until(500ms);
  auto e = next_event(queue, clock, SilencePolicy{}, 0ms, 0);
  REQUIRE(std::holds_alternative<KnowledgeEvent>(e));
  CHECK(std::get<KnowledgeEvent>(e).kind == EventKind::Chunk);
  CHECK(std::get<KnowledgeEvent>(e).timestamp == 400ms);
  CHECK(clock.now() == 500ms);
}

TEST_CASE("next_event: arrival at 2.5 s gives Silence@1, Silence@2, Chunk@2.5") {
  VirtualClock clock;
  KnowledgeQueue queue;
  queue.push("It is Everest.", 2500ms);
  queue.close(2500ms);
  const SilencePolicy policy{1.0, 3};
  Duration last{};
  int consecutive = 0;
  std::vector<std::pair<EventKind, Duration>> got;
  for (;;) {
    auto e = next_event(queue, clock, policy, last, consecutive, got.empty());
    if (std::holds_alternative<TurnEnd>(e)) break;
    auto& ev = std::get<KnowledgeEvent>(e);
    got.emplace_back(ev.kind, ev.timestamp);
    last = ev.timestamp;
    consecutive = ev.kind == EventKind::Silence ? consecutive + 1 : 0;
  }
  CHECK(got == std::vector<std::pair<EventKind, Duration>>{
                   {EventKind::Silence, 1s}, {EventKind::Silence, 2s}, {EventKind::Chunk, 2500ms}});
}

TEST_CASE("next_event: exhausted silence budget waits for the stream") {
  VirtualClock clock;
  KnowledgeQueue queue;
  queue.push("late", 7s);
  queue.close(8s);
  auto e = next_event(queue, clock, SilencePolicy{1.0, 2}, 3s, 2);
  REQUIRE(std::holds_alternative<KnowledgeEvent>(e));
  CHECK(std::get<KnowledgeEvent>(e).kind == EventKind::Chunk);
  CHECK(std::get<KnowledgeEvent>(e).timestamp == 7s);
  auto end = next_event(queue, clock, SilencePolicy{1.0, 2}, 7s, 0);
  REQUIRE(std::holds_alternative<TurnEnd>(end));
  CHECK(std::get<TurnEnd>(end).at == 8s);
}

TEST_CASE("run_turn: slow backend is covered by silence-driven phrases") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{3.0, "The answer is Everest."}}));
  ScriptedInfill infill(0.15);
  auto out = run_turn("What is the tallest mountain?", backend, infill, clock, SilencePolicy{1.0, 3});
  const auto& t = out.transcript;
  CHECK_FALSE(out.backend_error);
  CHECK(shape(t) == std::vector<std::pair<EventKind, Duration>>{
                        {EventKind::Silence, 1s}, {EventKind::Silence, 2s}, {EventKind::Chunk, 3s}});
  REQUIRE(t.size() == 3);
  CHECK(t.ttft() == 1150ms);
  CHECK(t.phrases()[0].text == "One moment.");
  CHECK(t.phrases()[2].text == "The answer is Everest.");
  CHECK(t.phrases()[2].start_timestamp == 3150ms);
}

TEST_CASE("run_turn: fast backend suppresses filler") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{0.2, "Fast fact."}}));
  ScriptedInfill infill(0.15);
  auto t = run_turn("q", backend, infill, clock, SilencePolicy{}).transcript;
  CHECK(shape(t) == std::vector<std::pair<EventKind, Duration>>{{EventKind::Chunk, 200ms}});
  CHECK(t.ttft() == 350ms);
}

TEST_CASE("run_turn: a backend closing with no chunks still yields one phrase") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({}, 0.1));
  ScriptedInfill infill(0.15);
  auto t = run_turn("q", backend, infill, clock, SilencePolicy{}).transcript;
  CHECK(shape(t) == std::vector<std::pair<EventKind, Duration>>{{EventKind::Silence, 1s}});
}

TEST_CASE("run_turn: instant mode answers at turn start") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{10.9, "Slow."}}));
  ScriptedInfill infill(0.16);
  auto t = run_turn("q", backend, infill, clock, SilencePolicy{0.0, 3}).transcript;
  CHECK(t.ttft() == 160ms);
  CHECK(t.events().front().timestamp == 0ms);
}

TEST_CASE("run_turn: chunks arriving mid-generation wait for the phrase") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{1.05, "A."}, {0.0, "B."}}));
  ScriptedInfill infill(0.5);
  auto t = run_turn("q", backend, infill, clock, SilencePolicy{}).transcript;
  // Sil@1.0 generates until 1.5; both chunks are then delivered in order.
  CHECK(shape(t) == std::vector<std::pair<EventKind, Duration>>{
                        {EventKind::Silence, 1s}, {EventKind::Chunk, 1050ms}, {EventKind::Chunk, 1050ms}});
  CHECK(t.phrases()[1].start_timestamp == 2s);
  CHECK(t.phrases()[2].start_timestamp == 2500ms);
}

TEST_CASE("run_turn: backend failure closes after the last balanced pair") {
  VirtualClock clock;
  auto s = schedule({{0.5, "Partial fact."}}, 1.2);
  s.failure = "upstream 500";
  ScriptedBackend backend(s);
  ScriptedInfill infill(0.1);
  auto out = run_turn("q", backend, infill, clock, SilencePolicy{});
  REQUIRE(out.backend_error);
  CHECK(out.backend_error->code() == ErrorCode::BackendFailure);
  CHECK(out.backend_error->cause() == ErrorCode::ProviderError);
  // Aborted at 1.7 s: after Chunk@0.5 and Sil@1.5, before the next silence.
  CHECK(shape(out.transcript) == std::vector<std::pair<EventKind, Duration>>{
                                     {EventKind::Chunk, 500ms}, {EventKind::Silence, 1500ms}});
}

TEST_CASE("run_turn: infill failure is fatal") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{0.5, "fact"}}));
  ScriptedInfill infill(0.1, ScriptedInfill::canned("   "));
  try {
    run_turn("q", backend, infill, clock, SilencePolicy{});
    FAIL("expected InfillFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfillFailure);
  }
}

TEST_CASE("run_turn: observer sees every event and phrase in order") {
  struct Recorder : TurnObserver {
    std::vector<std::string> log;
    void on_event(const KnowledgeEvent& e) override { log.push_back("E" + std::to_string(e.seq)); }
    void on_phrase_delta(std::size_t seq, const std::string&, Duration) override {
      log.push_back("D" + std::to_string(seq));
    }
    void on_phrase(const ConversationalPhrase& p, const Generation&) override {
      log.push_back("P" + std::to_string(p.seq));
    }
  } recorder;
  VirtualClock clock;
  ScriptedBackend backend(schedule({{1.5, "x."}}));
  ScriptedInfill infill(0.1);
  run_turn("q", backend, infill, clock, SilencePolicy{}, &recorder);
  CHECK(recorder.log == std::vector<std::string>{"E0", "D0", "P0", "E1", "D1", "P1"});
}

// Randomized arrival schedules checked against the tick-stepped oracle, plus
// the cadence, preemption, budget, balance and TTFT properties.
TEST_CASE("property: engine matches the discrete-event oracle") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 1500; ++trial) {
    const std::int64_t tick = 10;
    const auto n = rng() % 6;
    std::vector<std::int64_t> arrivals;
    std::int64_t t = 0;
    ScriptedSchedule s;
    for (unsigned i = 0; i < n; ++i) {
      const std::int64_t gap = tick * static_cast<std::int64_t>(rng() % 300);
      t += gap;
      arrivals.push_back(t);
      s.chunks.push_back({gap / 1000.0, "chunk " + std::to_string(i) + "."});
    }
    const std::int64_t close_gap = tick * static_cast<std::int64_t>(rng() % 200);
    s.close_delay_seconds = close_gap / 1000.0;
    const std::int64_t close = t + close_gap;
    const std::int64_t period = std::vector<std::int64_t>{0, 500, 1000, 1000, 1500}[rng() % 5];
    const int max_consecutive = 1 + static_cast<int>(rng() % 4);
    const std::int64_t latency = tick * static_cast<std::int64_t>(rng() % 60);

    VirtualClock clock(Duration(std::int64_t(rng() % 1000) * 1000));  // arbitrary base time
    ScriptedBackend backend(s);
    ScriptedInfill infill(latency / 1000.0);
    const SilencePolicy policy{period / 1000.0, max_consecutive};
    auto tr = run_turn("q", backend, infill, clock, policy).transcript;
    auto expected = oracle::simulate(arrivals, close, period, max_consecutive, latency, tick);

    INFO("trial " << trial);
    REQUIRE(tr.size() == expected.events.size());
    int consecutive = 0;
    Duration prev{};
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto& e = tr.events()[i];
      REQUIRE((e.kind == EventKind::Silence) == expected.events[i].silence);
      REQUIRE(e.timestamp == std::chrono::milliseconds(expected.events[i].at_ms));
      REQUIRE(tr.phrases()[i].start_timestamp == std::chrono::milliseconds(expected.phrase_ms[i]));
      if (e.kind == EventKind::Silence) {
        REQUIRE(e.timestamp == prev + std::chrono::milliseconds(period));  // cadence
        ++consecutive;
        REQUIRE(consecutive <= max_consecutive);  // budget
      } else {
        consecutive = 0;
      }
      prev = e.timestamp;
    }
    // preemption: the next undelivered chunk always arrives after a silence
    std::size_t delivered = 0;
    for (const auto& e : tr.events()) {
      if (e.kind == EventKind::Chunk) {
        ++delivered;
      } else if (delivered < arrivals.size()) {
        REQUIRE(std::chrono::milliseconds(arrivals[delivered]) > e.timestamp);
      }
    }
    REQUIRE(delivered == arrivals.size());
    REQUIRE(tr.size() >= 1);
    REQUIRE(tr.ttft() == tr.events().front().timestamp + std::chrono::milliseconds(latency));
  }
}

TEST_CASE("dialogue session accumulates backend history across turns") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{0.3, "Fact one."}}));
  ScriptedInfill infill(0.1);
  DialogueSession session(backend, infill, clock, SilencePolicy{});
  auto conv = run_conversation(session, {"first question", "second question", "third question"});
  REQUIRE(conv.turns.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(conv.turns[i].turn_index() == i);
  auto requests = backend.requests();
  REQUIRE(requests.size() == 3);
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto& h = requests[k - 1];
    CHECK(h.size() == 2 * (k - 1) + 1);
    CHECK(h.messages().back() == DialogueMessage{Speaker::User, conv.turns[k - 1].user_utterance()});
    for (std::size_t i = 0; i < h.size(); ++i) {
      CHECK(h.messages()[i].speaker == (i % 2 == 0 ? Speaker::User : Speaker::Assistant));
    }
  }
  CHECK(requests[1].messages()[1].text == conv.turns[0].joined_phrases());
  CHECK(session.history().size() == 6);
}

TEST_CASE("single-turn conversation equals run_turn") {
  VirtualClock c1;
  VirtualClock c2;
  ScriptedBackend b1(schedule({{2.5, "A. B."}}));
  ScriptedBackend b2(schedule({{2.5, "A. B."}}));
  ScriptedInfill i1(0.2);
  ScriptedInfill i2(0.2);
  auto direct = run_turn("q", b1, i1, c1, SilencePolicy{}).transcript;
  DialogueSession session(b2, i2, c2, SilencePolicy{});
  auto conv = run_conversation(session, {"q"});
  REQUIRE(conv.turns.size() == 1);
  CHECK(conv.turns[0] == direct);
}

TEST_CASE("dialogue session reports the failing turn index") {
  VirtualClock clock;
  ScriptedBackend backend(schedule({{0.3, "fact"}}));
  int calls = 0;
  ScriptedInfill infill(0.1, [&](const std::string&) { return ++calls > 1 ? std::string() : std::string("ok"); });
  DialogueSession session(backend, infill, clock, SilencePolicy{});
  session.run("one");
  try {
    session.run("two");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfillFailure);
    CHECK(std::string(e.what()).find("turn 1") != std::string::npos);
  }
  CHECK(session.history().size() == 2);
}

TEST_CASE("wall clock: instant mode keeps TTFT near the infill latency") {
  SteadyClock clock;
  ScriptedBackend backend(schedule({{0.6, "Slow fact."}}));
  ScriptedInfill infill(0.15);
  auto t = run_turn("q", backend, infill, clock, SilencePolicy{0.0, 1}).transcript;
  REQUIRE(t.ttft());
  CHECK(*t.ttft() >= 150ms);
  CHECK(*t.ttft() < 300ms);
  REQUIRE(t.size() == 2);
  CHECK(t.events()[1].kind == EventKind::Chunk);
  CHECK(t.events()[1].timestamp >= 600ms);
}
