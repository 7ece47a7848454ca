#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "infill/dataset.hpp"
#include "infill/error.hpp"
#include "infill/prompt_format.hpp"

using namespace infill;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConversationDocument fixture_doc() {
  auto j = Json::parse(read_file(std::string(INFILL_FIXTURES) + "/conversation_8turns.json"));
  return document_from_json(j.dump());
}

// Random well-formed document: every turn has 1-4 aligned sentences.
ConversationDocument random_doc(std::mt19937& rng) {
  ConversationDocument doc;
  doc.id = "r" + std::to_string(rng());
  doc.domain = "advice";
  const std::size_t turns = 1 + rng() % 12;
  for (std::size_t t = 0; t < turns; ++t) {
    DocumentTurn turn;
    turn.user = "question " + std::to_string(t);
    const std::size_t n = 1 + rng() % 4;
    for (std::size_t j = 0; j < n; ++j) {
      turn.responder.push_back("phrase " + std::to_string(t) + "." + std::to_string(j));
      turn.responder_thoughts.push_back(rng() % 3 == 0 ? std::string(kSilenceToken)
                                                       : "fact " + std::to_string(t) + "." + std::to_string(j));
    }
    doc.turns.push_back(std::move(turn));
  }
  return doc;
}

std::size_t count_role(const std::vector<RoleTaggedMessage>& messages, Role role) {
  std::size_t n = 0;
  for (const auto& m : messages) n += m.role == role ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("split of a three-sentence turn yields growing contexts") {
  ConversationDocument doc;
  doc.id = "c1";
  doc.turns.push_back({"Who won the most majors?",
                       {"Hmm, let me check.", "That is Jack Nicklaus.", "He won eighteen."},
                       {std::string(kSilenceToken), "Jack Nicklaus won the most majors.", "He won 18 majors."}});
  auto examples = split_turns(doc);
  REQUIRE(examples.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    auto messages = parse_messages(examples[j].rendered_context);
    // user + (j+1) knowledge + j assistant
    CHECK(messages.size() == 2 * j + 2);
    CHECK(count_role(messages, Role::User) == 1);
    CHECK(count_role(messages, Role::Knowledge) == j + 1);
    CHECK(count_role(messages, Role::Assistant) == j);
    CHECK(messages.back().role == Role::Knowledge);
    CHECK(examples[j].target_phrase == doc.turns[0].responder[j]);
    CHECK(examples[j].phrase_index == j);
  }
  CHECK(parse_messages(examples[0].rendered_context)[1].content == kSilenceToken);
}

TEST_CASE("split count equals total responder sentences and round-trips to a prefix") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    auto doc = random_doc(rng);
    std::size_t total = 0;
    for (const auto& t : doc.turns) total += t.responder.size();
    auto examples = split_turns(doc);
    REQUIRE(examples.size() == total);
    for (const auto& e : examples) {
      const auto& turn = doc.turns[e.turn_index];
      auto parsed = parse_context(e.rendered_context);
      CHECK(parsed.user_utterance == turn.user);
      REQUIRE(parsed.events.size() == e.phrase_index + 1);
      REQUIRE(parsed.phrases.size() == e.phrase_index);
      for (std::size_t k = 0; k <= e.phrase_index; ++k) {
        const auto& thought = turn.responder_thoughts[k];
        if (thought == kSilenceToken) {
          CHECK(parsed.events[k].kind == EventKind::Silence);
        } else {
          CHECK(parsed.events[k].text == thought);
        }
      }
      for (std::size_t k = 0; k < e.phrase_index; ++k) CHECK(parsed.phrases[k].text == turn.responder[k]);
      CHECK(e.target_phrase == turn.responder[e.phrase_index]);
      // JSONL round trip
      auto back = example_from_json(to_json(e).dump());
      CHECK(back.rendered_context == e.rendered_context);
      CHECK(back.target_phrase == e.target_phrase);
    }
  }
}

TEST_CASE("validation reports each malformation") {
  auto doc = fixture_doc();
  CHECK(validate_document(doc).empty());
  CHECK_NOTHROW(split_turns(doc));

  SUBCASE("alignment") {
    doc.turns[2].responder_thoughts.pop_back();
    auto v = validate_document(doc);
    REQUIRE(v.size() == 1);
    CHECK(v[0].kind == ViolationKind::AlignmentViolation);
    CHECK(v[0].turn == 2u);
    CHECK_THROWS_AS(split_turns(doc), Error);
  }
  SUBCASE("silence in responder") {
    doc.turns[0].responder[0] = "ok <|sil|>";
    CHECK(validate_document(doc).at(0).kind == ViolationKind::SilenceInResponder);
  }
  SUBCASE("mixed silence thought") {
    doc.turns[0].responder_thoughts[0] = "fact <|sil|>";
    CHECK(validate_document(doc).at(0).kind == ViolationKind::ChunkContainsSilence);
  }
  SUBCASE("blank user") {
    doc.turns[1].user = "  ";
    CHECK(validate_document(doc).at(0).kind == ViolationKind::EmptyUser);
  }
  SUBCASE("short document is only a warning") {
    doc.turns.resize(3);
    auto v = validate_document(doc);
    REQUIRE(v.size() == 1);
    CHECK(v[0].is_warning());
    CHECK_FALSE(has_errors(v));
    CHECK(split_turns(doc).size() > 0);
  }
  SUBCASE("no turns") {
    doc.turns.clear();
    CHECK(has_errors(validate_document(doc)));
  }
}

TEST_CASE("split error code is ValidationError") {
  ConversationDocument doc;
  doc.turns.push_back({"q", {"a", "b"}, {"x"}});
  try {
    split_turns(doc);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ValidationError);
  }
}

TEST_CASE("malformed document lines raise ParseError") {
  CHECK_THROWS_AS(document_from_json("{not json"), Error);
  try {
    document_from_json(R"({"id":"x","turns":[{"user":"q"}]})");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
}

TEST_CASE("seed bank holds 1000 distinct seeds per domain") {
  const auto& bank = SeedBank::standard();
  for (const auto& domain : kDomains) {
    const auto& seeds = bank.seeds(domain);
    CHECK(seeds.size() == 1000);
    std::set<std::string> distinct;
    for (const auto& s : seeds) distinct.insert(s.text);
    CHECK(distinct.size() == 1000);
  }
  CHECK(bank.kind("medical") == SeedKind::Persona);
  CHECK(bank.kind("planning") == SeedKind::Subtopic);
  CHECK_THROWS_AS(bank.seeds("astrology"), Error);
}

TEST_CASE("template generation is deterministic, valid and fully entailed") {
  LexicalOracle oracle;
  const auto& bank = SeedBank::standard();
  std::size_t docs = 0;
  for (const auto& domain : kDomains) {
    const auto& seeds = bank.seeds(domain);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto& seed = seeds[(s * 37) % seeds.size()].text;
      auto doc = template_generate(domain, seed, s);
      CHECK(to_json(doc).dump() == to_json(template_generate(domain, seed, s)).dump());
      CHECK(doc.turns.size() >= kMinTurns);
      CHECK(doc.turns.size() <= kMaxTurns);
      CHECK(validate_document(doc).empty());
      auto examples = split_turns(doc);
      auto filtered = filter_entailed(examples, oracle);
      CHECK(filtered.rejected.empty());
      CHECK(filtered.kept.size() == examples.size());
      ++docs;
    }
  }
  CHECK(docs == 120);
  CHECK_THROWS_AS(template_generate("astrology", "x", 1), Error);
}

TEST_CASE("filter rejects non-entailed targets and keeps silence fillers") {
  ConversationDocument doc;
  doc.id = "f";
  doc.turns.push_back({"Is the store open?",
                       {"One sec.", "The store is closed today.", "It sells bread."},
                       {std::string(kSilenceToken), "The store is open today.", "The store sells bread."}});
  LexicalOracle oracle;
  auto r = filter_entailed(split_turns(doc), oracle);
  REQUIRE(r.kept.size() == 2);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.kept[0].phrase_index == 0);
  CHECK(r.rejected[0].example.phrase_index == 1);
  CHECK(r.rejected[0].reason.find("contradiction") == 0);
}

TEST_CASE("llm generation sends the seed and parses the streamed reply") {
  auto doc = fixture_doc();
  const auto reply = to_json(doc).dump();
  // Split the JSON across chunks at arbitrary points; the joiner adds spaces
  // between chunks, which only lands inside string values at word breaks.
  ScriptedSchedule schedule;
  std::size_t pos = 0;
  while (pos < reply.size()) {
    auto cut = reply.find(' ', pos + 40);
    if (cut == std::string::npos) cut = reply.size();
    schedule.chunks.push_back({0.01, reply.substr(pos, cut - pos)});
    pos = cut == reply.size() ? cut : cut + 1;
  }
  schedule.close_delay_seconds = 0.01;
  ScriptedBackend backend(schedule);
  VirtualClock clock;
  auto got = llm_generate("medical", "a runner dealing with a sprained ankle", backend, clock);
  CHECK(to_json(got).dump() == to_json(doc).dump());
  auto requests = backend.requests();
  REQUIRE(requests.size() == 1);
  REQUIRE(requests[0].size() == 1);
  CHECK(requests[0].messages()[0].text.find("a runner dealing with a sprained ankle") != std::string::npos);
  CHECK(requests[0].messages()[0].text.find("medical") != std::string::npos);

  SUBCASE("invalid reply is a validation error") {
    auto bad = doc;
    bad.turns[0].responder_thoughts.clear();
    ScriptedSchedule s2;
    s2.chunks.push_back({0.0, to_json(bad).dump()});
    ScriptedBackend b2(s2);
    try {
      llm_generate("medical", "x", b2, clock);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ValidationError);
    }
  }
  SUBCASE("short reply is rejected at generation time") {
    auto shorter = doc;
    shorter.turns.resize(4);
    ScriptedSchedule s2;
    s2.chunks.push_back({0.0, to_json(shorter).dump()});
    ScriptedBackend b2(s2);
    CHECK_THROWS_AS(llm_generate("medical", "x", b2, clock), Error);
  }
  SUBCASE("stream failure is a generation error") {
    ScriptedSchedule s2;
    s2.failure = "rate limited";
    ScriptedBackend b2(s2);
    try {
      llm_generate("medical", "x", b2, clock);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GenerationError);
    }
  }
}

TEST_CASE("corpus stats") {
  CorpusStats s;
  CHECK(s.reject_rate() == 0.0);
  s.conversations = 2;
  s.turns = 18;
  s.examples = 30;
  s.rejected = 10;
  CHECK(s.reject_rate() == doctest::Approx(0.25));
  CHECK(s.turns_per_conversation() == doctest::Approx(9.0));
  CHECK(s.to_json()["examples"] == 30);
}
