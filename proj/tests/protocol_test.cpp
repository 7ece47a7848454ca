#include <doctest.h>

#include <random>

#include "infill/error.hpp"
#include "infill/json_io.hpp"
#include "infill/protocol.hpp"

using namespace infill;
using namespace std::chrono_literals;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an infill::Error");
  return ErrorCode::ParseError;
}

}  // namespace

TEST_CASE("open_turn trims and starts empty") {
  auto s = TurnState::open("What's the weather in Tokyo?");
  CHECK(s.events().empty());
  CHECK(s.phrases().empty());
  CHECK(s.status() == TurnState::Status::Open);

  CHECK(TurnState::open("  hi ").user_utterance() == "hi");
  CHECK(code_of([] { TurnState::open(""); }) == ErrorCode::EmptyUtterance);
  CHECK(code_of([] { TurnState::open(" \t\n"); }) == ErrorCode::EmptyUtterance);
}

TEST_CASE("append_event and append_phrase follow strict alternation") {
  auto s = TurnState::open("What's the weather in Tokyo?");
  CHECK(s.append_event(EventKind::Chunk, "Tokyo will be rainy.", 2100ms) == 0);
  CHECK(code_of([&] { s.append_event(EventKind::Silence, "", 3100ms); }) == ErrorCode::ProtocolViolation);
  CHECK(s.append_phrase("Let me check the forecast for Tokyo...", 2260ms) == 0);
  CHECK(s.phrases()[0].source_event_seq == 0);

  auto seq = s.append_event(EventKind::Silence, "", 3100ms);
  CHECK(seq == 1);
  CHECK(s.events()[1].kind == EventKind::Silence);
  CHECK(s.events()[1].text.empty());
}

TEST_CASE("append_phrase without an unanswered event is rejected") {
  auto s = TurnState::open("q");
  CHECK(code_of([&] { s.append_phrase("hello", 0ms); }) == ErrorCode::ProtocolViolation);
  s.append_event(EventKind::Silence, "", 1s);
  CHECK(code_of([&] { s.append_phrase("   ", 1s); }) == ErrorCode::EmptyPhrase);
}

TEST_CASE("invalid events") {
  auto s = TurnState::open("q");
  CHECK(code_of([&] { s.append_event(EventKind::Chunk, "  ", 0ms); }) == ErrorCode::InvalidChunk);
  CHECK(code_of([&] { s.append_event(EventKind::Silence, "text", 0ms); }) == ErrorCode::InvalidChunk);
  CHECK(code_of([&] { s.append_event(EventKind::Silence, "", -1ms); }) == ErrorCode::ProtocolViolation);
  s.append_event(EventKind::Silence, "", 2s);
  s.append_phrase("ok", 2s);
  CHECK(code_of([&] { s.append_event(EventKind::Silence, "", 1s); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("close_turn") {
  SUBCASE("balanced") {
    auto s = TurnState::open("q");
    for (int i = 0; i < 3; ++i) {
      s.append_event(EventKind::Silence, "", Duration(i));
      s.append_phrase("p", Duration(i + 5));
    }
    auto t = s.close();
    CHECK(t.size() == 3);
    CHECK(t.ttft() == Duration(5));
    CHECK(s.status() == TurnState::Status::Closed);
    CHECK(code_of([&] { s.append_event(EventKind::Silence, "", 10s); }) == ErrorCode::ClosedTurn);
    CHECK(code_of([&] { s.close(); }) == ErrorCode::ClosedTurn);
  }
  SUBCASE("unbalanced") {
    auto s = TurnState::open("q");
    s.append_event(EventKind::Silence, "", 0ms);
    s.append_phrase("p", 0ms);
    s.append_event(EventKind::Chunk, "c", 0ms);
    CHECK(code_of([&] { s.close(); }) == ErrorCode::UnbalancedTurn);
  }
  SUBCASE("empty") {
    auto t = TurnState::open("q").close();
    CHECK(t.size() == 0);
    CHECK_FALSE(t.ttft().has_value());
  }
}

// Oracle: a two-counter model of the alternation rule. Every call sequence up
// to length 10 is replayed against both and accept/reject must agree.
TEST_CASE("state machine matches the enumerated counter model") {
  constexpr int kMaxLen = 10;
  for (int len = 0; len <= kMaxLen; ++len) {
    for (unsigned mask = 0; mask < (1u << len); ++mask) {
      auto s = TurnState::open("q");
      std::size_t e = 0;
      std::size_t c = 0;
      for (int i = 0; i < len; ++i) {
        const bool is_event = (mask >> i) & 1u;
        const bool model_accepts = is_event ? e == c : e == c + 1;
        bool accepted = true;
        try {
          if (is_event) {
            s.append_event(EventKind::Silence, "", Duration(i));
          } else {
            s.append_phrase("p", Duration(i));
          }
        } catch (const Error& err) {
          accepted = false;
          REQUIRE(err.code() == ErrorCode::ProtocolViolation);
        }
        REQUIRE(accepted == model_accepts);
        if (accepted) (is_event ? e : c)++;
        REQUIRE(s.events().size() == e);
        REQUIRE(s.phrases().size() == c);
      }
      bool closed = true;
      try {
        s.close();
      } catch (const Error&) {
        closed = false;
      }
      REQUIRE(closed == (e == c));
    }
  }
}

TEST_CASE("property: random call sequences keep phrases <= events <= phrases + 1") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    auto s = TurnState::open("q");
    Duration t{};
    std::uniform_int_distribution<int> step(0, 3);
    for (int i = 0; i < 40; ++i) {
      t += Duration(step(rng));
      try {
        if (rng() % 2) {
          s.append_event(rng() % 2 ? EventKind::Chunk : EventKind::Silence, rng() % 2 ? "" : "c", t);
        } else {
          s.append_phrase(rng() % 5 ? "p" : "", t);
        }
      } catch (const Error&) {
      }
      REQUIRE(s.phrases().size() <= s.events().size());
      REQUIRE(s.events().size() <= s.phrases().size() + 1);
    }
    if (!s.pending()) {
      auto tr = s.close();
      for (std::size_t i = 0; i < tr.size(); ++i) REQUIRE(tr.phrases()[i].source_event_seq == i);
      REQUIRE(tr.silence_count() + tr.chunk_count() == tr.size());
    }
  }
}

TEST_CASE("transcript JSON uses the canonical field names and round-trips") {
  auto s = TurnState::open("How tall is Everest?");
  s.append_event(EventKind::Silence, "", 1s);
  s.append_phrase("Good question.", 1150ms);
  s.append_event(EventKind::Chunk, "It is 8849 m.", 2500ms);
  s.append_phrase("It is 8849 m.", 2650ms);
  auto t = s.close().with_turn_index(3);

  auto j = to_json(t);
  CHECK(j["user"] == "How tall is Everest?");
  CHECK(j["events"][0]["kind"] == "silence");
  CHECK_FALSE(j["events"][0].contains("text"));
  CHECK(j["events"][1]["text"] == "It is 8849 m.");
  CHECK(j["events"][1]["timestamp"] == 2.5);
  CHECK(j["phrases"][1]["start_timestamp"] == 2.65);
  CHECK(j["ttft"] == 1.15);

  auto back = transcript_from_json(transcript_to_json(t));
  CHECK(back == t);

  CHECK_THROWS_AS(transcript_from_json("{\"user\":\"x\"}"), Error);
  CHECK_THROWS_AS(transcript_from_json("not json"), Error);
}
