// SPDX-License-Identifier: Apache-2.0

#include "infill/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>
#include <unordered_map>

#include "infill/prompt_format.hpp"

namespace infill {

// --- documents --------------------------------------------------------------

Json to_json(const ConversationDocument& doc) {
  Json j;
  j["id"] = doc.id;
  j["domain"] = doc.domain;
  j["seed"] = doc.seed;
  j["turns"] = Json::array();
  for (const auto& t : doc.turns) {
    j["turns"].push_back({{"user", t.user}, {"responder", t.responder}, {"responder_thoughts", t.responder_thoughts}});
  }
  return j;
}

ConversationDocument document_from_json(std::string_view line) {
  try {
    auto j = Json::parse(line);
    ConversationDocument doc;
    doc.id = j.value("id", "");
    doc.domain = j.value("domain", "");
    doc.seed = j.value("seed", "");
    for (const auto& t : j.at("turns")) {
      DocumentTurn turn;
      turn.user = t.at("user").get<std::string>();
      turn.responder = t.at("responder").get<std::vector<std::string>>();
      turn.responder_thoughts = t.at("responder_thoughts").get<std::vector<std::string>>();
      doc.turns.push_back(std::move(turn));
    }
    return doc;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NoTurns: return "NoTurns";
    case ViolationKind::EmptyUser: return "EmptyUser";
    case ViolationKind::EmptyResponder: return "EmptyResponder";
    case ViolationKind::AlignmentViolation: return "AlignmentViolation";
    case ViolationKind::EmptySentence: return "EmptySentence";
    case ViolationKind::SilenceInResponder: return "SilenceInResponder";
    case ViolationKind::ChunkContainsSilence: return "ChunkContainsSilence";
    case ViolationKind::LengthWarning: return "LengthWarning";
  }
  return "Unknown";
}

std::vector<Violation> validate_document(const ConversationDocument& doc) {
  std::vector<Violation> out;
  if (doc.turns.empty()) out.push_back({ViolationKind::NoTurns, std::nullopt, "document has no turns"});
  if (!doc.turns.empty() && (doc.turns.size() < kMinTurns || doc.turns.size() > kMaxTurns)) {
    out.push_back({ViolationKind::LengthWarning, std::nullopt,
                   std::to_string(doc.turns.size()) + " turns, expected 8-12"});
  }
  for (std::size_t i = 0; i < doc.turns.size(); ++i) {
    const auto& t = doc.turns[i];
    if (trim(t.user).empty()) out.push_back({ViolationKind::EmptyUser, i, "user utterance is blank"});
    if (t.responder.empty()) out.push_back({ViolationKind::EmptyResponder, i, "responder list is empty"});
    if (t.responder.size() != t.responder_thoughts.size()) {
      out.push_back({ViolationKind::AlignmentViolation, i,
                     std::to_string(t.responder.size()) + " responder vs " +
                         std::to_string(t.responder_thoughts.size()) + " responder_thoughts"});
    }
    for (const auto& s : t.responder) {
      if (trim(s).empty()) out.push_back({ViolationKind::EmptySentence, i, "blank responder sentence"});
      if (s.find(kSilenceToken) != std::string::npos) {
        out.push_back({ViolationKind::SilenceInResponder, i, "responder sentence contains the silence token"});
      }
    }
    for (const auto& s : t.responder_thoughts) {
      if (trim(s).empty()) out.push_back({ViolationKind::EmptySentence, i, "blank responder thought"});
      if (s != kSilenceToken && s.find(kSilenceToken) != std::string::npos) {
        out.push_back({ViolationKind::ChunkContainsSilence, i, "thought mixes text and the silence token"});
      }
    }
  }
  return out;
}

bool has_errors(const std::vector<Violation>& violations) {
  return std::any_of(violations.begin(), violations.end(), [](const auto& v) { return !v.is_warning(); });
}

Json to_json(const TrainingExample& example) {
  Json j;
  j["conversation_id"] = example.conversation_id;
  j["turn_index"] = example.turn_index;
  j["phrase_index"] = example.phrase_index;
  j["context"] = example.rendered_context;
  j["target"] = example.target_phrase;
  return j;
}

TrainingExample example_from_json(std::string_view line) {
  try {
    auto j = Json::parse(line);
    TrainingExample e;
    e.conversation_id = j.at("conversation_id").get<std::string>();
    e.turn_index = j.at("turn_index").get<std::size_t>();
    e.phrase_index = j.at("phrase_index").get<std::size_t>();
    e.rendered_context = j.at("context").get<std::string>();
    e.target_phrase = j.at("target").get<std::string>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, ex.what());
  }
}

std::vector<TrainingExample> split_turns(const ConversationDocument& doc) {
  auto violations = validate_document(doc);
  if (has_errors(violations)) {
    const auto& v = *std::find_if(violations.begin(), violations.end(), [](const auto& x) { return !x.is_warning(); });
    throw Error(ErrorCode::ValidationError, std::string(to_string(v.kind)) + ": " + v.detail);
  }
  std::vector<TrainingExample> out;
  for (std::size_t t = 0; t < doc.turns.size(); ++t) {
    const auto& turn = doc.turns[t];
    auto state = TurnState::open(turn.user);
    for (std::size_t j = 0; j < turn.responder.size(); ++j) {
      const auto& thought = turn.responder_thoughts[j];
      const bool silent = thought == kSilenceToken;
      state.append_event(silent ? EventKind::Silence : EventKind::Chunk, silent ? "" : thought, Duration::zero());
      out.push_back(TrainingExample{render_context(state), turn.responder[j], doc.id, t, j});
      state.append_phrase(turn.responder[j], Duration::zero());
    }
  }
  return out;
}

FilterResult filter_entailed(const std::vector<TrainingExample>& examples, Classifier& gate) {
  FilterResult result;
  for (const auto& e : examples) {
    auto chunk = last_knowledge(e.rendered_context);
    if (!chunk) {
      result.kept.push_back(e);
      continue;
    }
    auto v = classify(*chunk, e.target_phrase, gate);
    if (v.label == Label::Entailment) {
      result.kept.push_back(e);
    } else {
      std::string reason = std::string(to_string(v.label)) + " (score " + std::to_string(v.score) + ")";
      result.rejected.push_back({e, std::move(reason)});
    }
  }
  return result;
}

// --- seeds ------------------------------------------------------------------

namespace {

struct DomainTemplates {
  const char* name;
  SeedKind kind;
  std::array<const char*, 10> roles;      // persona roles or audiences
  std::array<const char*, 10> topics;
  std::array<const char*, 10> facts;      // "{t}" is replaced by the topic
  std::array<const char*, 5> openers;
};

constexpr std::array<const char*, 10> kQualifiers = {
    "for the first time",     "on a tight budget",          "with very little time",
    "after a bad experience", "while travelling",           "with a busy family",
    "while working full time", "after moving to a new city", "with help from a friend",
    "before an upcoming deadline"};

// clang-format off
const std::array<DomainTemplates, 6>& templates() {
  static const std::array<DomainTemplates, 6> t = {{
    {"advice", SeedKind::Subtopic,
     {"a student", "a new parent", "a retiree", "a young professional", "a small business owner",
      "a recent graduate", "a freelancer", "a couple", "a college athlete", "a night shift worker"},
     {"saving money", "changing careers", "sleeping better", "making new friends", "asking for a raise",
      "learning to cook", "staying motivated", "handling stress", "buying a first car", "organizing a home"},
     {"A good first step with {t} is writing down one clear goal.",
      "Most people find {t} easier when they split it into small weekly steps.",
      "Tracking progress every few days keeps {t} on course.",
      "Talking with someone who has done {t} before often saves time.",
      "Setting a fixed time each day for {t} builds a steady habit.",
      "Small early wins make {t} feel much more manageable.",
      "A simple checklist helps you remember the key parts of {t}.",
      "Reviewing what worked each week makes {t} smoother over time.",
      "Free online guides cover the basics of {t} in plain language.",
      "Most progress with {t} shows up after about a month of steady effort."},
     {"I could use some advice about {t}.", "Can you help me think through {t}?",
      "I want to get better at {t}.", "Where do I even start with {t}?", "I keep struggling with {t}."}},
    {"assistant", SeedKind::Subtopic,
     {"a busy parent", "a commuter", "a home cook", "a traveller", "a student",
      "an office worker", "a gardener", "a pet owner", "a music fan", "a runner"},
     {"setting reminders", "planning meals", "checking the weather", "booking a table", "finding a recipe",
      "tracking a package", "converting units", "making a shopping list", "timing a workout", "finding a podcast"},
     {"Your calendar app can handle {t} with a quick voice command.",
      "Most phones offer a shortcut for {t} on the home screen.",
      "A shared list makes {t} easy to coordinate with family.",
      "Many apps sync {t} across your phone and laptop.",
      "Saving a template speeds up {t} the next time.",
      "Notifications for {t} can be set to arrive in the morning.",
      "A weekly routine makes {t} take only a few minutes.",
      "Voice assistants confirm {t} by reading the details back.",
      "Favourites let you repeat {t} with one tap.",
      "The settings page controls how often {t} updates."},
     {"Can you help me with {t}?", "I need a hand with {t}.", "What is the quickest way to handle {t}?",
      "Could you walk me through {t}?", "I am trying to sort out {t}."}},
    {"education", SeedKind::Persona,
     {"a high school student", "a parent helping with homework", "an adult learner", "a language learner",
      "a first year undergraduate", "a teacher preparing a lesson", "a student retaking an exam",
      "a homeschooling parent", "a graduate student", "a self taught programmer"},
     {"fractions", "photosynthesis", "the water cycle", "essay structure", "basic algebra",
      "the French revolution", "spanish verbs", "cell division", "reading graphs", "simple loops in code"},
     {"The core idea behind {t} fits in one or two sentences.",
      "A worked example makes {t} much easier to follow.",
      "Drawing a quick diagram helps with {t}.",
      "Practice problems on {t} work best in short daily sessions.",
      "Explaining {t} out loud to someone else shows what you really understand.",
      "Most textbooks cover {t} with a summary at the end of the chapter.",
      "Flash cards help with the key terms in {t}.",
      "Teachers often test {t} with short written questions.",
      "Online videos show {t} step by step.",
      "Connecting {t} to everyday life makes it stick."},
     {"I am stuck on {t}.", "Can you explain {t} to me?", "I have a test coming up on {t}.",
      "How should I study {t}?", "I keep mixing up parts of {t}."}},
    {"planning", SeedKind::Subtopic,
     {"a large family", "a group of friends", "a work team", "a couple", "a school class",
      "a sports club", "a retired couple", "a book club", "a wedding party", "a neighbourhood group"},
     {"a birthday party", "a weekend trip", "a team dinner", "a surprise anniversary", "a garden barbecue",
      "a charity run", "a holiday budget", "a house move", "a graduation party", "a camping trip"},
     {"Booking the venue early is the first step for {t}.",
      "A shared budget sheet keeps {t} on track.",
      "Sending invitations three weeks ahead works well for {t}.",
      "A simple timeline helps everyone prepare for {t}.",
      "Asking guests about food preferences makes {t} smoother.",
      "A backup plan for bad weather protects {t}.",
      "Splitting tasks among a few helpers lightens {t}.",
      "Confirming bookings a week before keeps {t} stress free.",
      "A short checklist for the day itself keeps {t} organized.",
      "Photos and a small thank you message round off {t} nicely."},
     {"I am organizing {t}.", "Can you help me plan {t}?", "We want to put together {t}.",
      "I have to arrange {t} soon.", "Where should I start with {t}?"}},
    {"customer_service", SeedKind::Persona,
     {"a customer with a late order", "a first time subscriber", "a frustrated caller", "a small shop owner",
      "an elderly customer", "a customer moving house", "a gift buyer", "a returning customer",
      "a customer travelling abroad", "a customer on a family plan"},
     {"a delayed delivery", "a billing question", "a broken product", "a refund request", "an account login",
      "a subscription change", "a missing item", "a warranty claim", "a plan upgrade", "an address change"},
     {"Your order number lets us look up {t} right away.",
      "Most cases like {t} are resolved within two business days.",
      "The account page shows the current status of {t}.",
      "A confirmation email is sent once {t} is processed.",
      "Our team can handle {t} over chat or phone.",
      "Keeping the receipt speeds up {t}.",
      "You will get a reference number for {t}.",
      "Updates on {t} arrive by text message.",
      "A supervisor reviews {t} if it takes longer than a week.",
      "The help centre has a short guide for {t}."},
     {"I need help with {t}.", "I am calling about {t}.", "Can you sort out {t} for me?",
      "I have a problem with {t}.", "I want to ask about {t}."}},
    {"medical", SeedKind::Persona,
     {"a parent of a toddler", "a pregnant woman", "an older adult", "a college student", "a runner",
      "a new mother", "a caregiver for a parent", "an office worker", "a teenager", "a shift worker"},
     {"a mild fever", "seasonal allergies", "a sprained ankle", "trouble sleeping", "a sore throat",
      "lower back pain", "a persistent cough", "frequent headaches", "heartburn", "a skin rash"},
     {"Rest and plenty of fluids help most cases of {t}.",
      "A pharmacist can suggest simple remedies for {t}.",
      "Keeping a short diary helps track {t}.",
      "Most cases of {t} improve within a week.",
      "A doctor should check {t} if it lasts more than two weeks.",
      "Gentle movement often eases {t}.",
      "Sudden severe symptoms with {t} need urgent care.",
      "Regular sleep supports recovery from {t}.",
      "A cool compress can relieve discomfort from {t}.",
      "Writing down questions before a visit helps a doctor assess {t}."},
     {"I have been dealing with {t}.", "What should I do about {t}?", "I am worried about {t}.",
      "Can you tell me about {t}?", "I think I have {t}."}},
  }};
  return t;
}
// clang-format on

constexpr std::array<const char*, 12> kFollowUps = {
    "What should I do first?",          "How long does that usually take?",
    "Is there anything I should avoid?", "What would you suggest next?",
    "How will I know it is working?",   "Can you tell me more about that?",
    "What if that does not help?",      "Is that expensive?",
    "Who else could help me with this?", "Anything else I should know?",
    "Does that work for most people?",  "How often should I do that?"};

constexpr std::array<const char*, 5> kClosers = {"Thanks, that really helps.", "Great, thank you so much.",
                                                 "Okay, I feel better about this now.", "Perfect, thanks for the help.",
                                                 "That is all I needed, thanks."};

constexpr std::array<const char*, 6> kFillers = {"Let me think about that for a second.", "Good question, one moment.",
                                                 "Hmm, let me check.",                     "Okay, let me see.",
                                                 "Right, give me a second.",               "Let me pull that together."};

constexpr std::array<const char*, 4> kGoodbyes = {"Glad I could help.", "Good luck with everything.",
                                                  "Happy to help any time.", "Take care."};

// Markers are stopwords for the lexical oracle, so they never add content.
constexpr std::array<const char*, 6> kMarkers = {"", "So, ", "Well, ", "Okay, ", "Right, ", "Basically, "};

const DomainTemplates* find_templates(std::string_view domain) {
  for (const auto& d : templates()) {
    if (domain == d.name) return &d;
  }
  return nullptr;
}

std::string fill(std::string_view pattern, std::string_view topic) {
  std::string out(pattern);
  auto pos = out.find("{t}");
  if (pos != std::string::npos) out.replace(pos, 3, topic);
  return out;
}

std::string lower_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return s;
}

/// mt19937_64 output is fully specified, unlike the standard distributions.
class Picker {
 public:
  explicit Picker(std::uint64_t seed) : rng_(seed) {}
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  bool coin() { return (rng_() & 1u) != 0; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

const SeedBank& SeedBank::standard() {
  static const SeedBank bank = [] {
    SeedBank b;
    for (const auto& d : templates()) {
      Domain domain{d.name, d.kind, {}};
      for (const char* role : d.roles) {
        for (const char* topic : d.topics) {
          for (const char* qualifier : kQualifiers) {
            std::string text = d.kind == SeedKind::Persona
                                   ? std::string(role) + " dealing with " + topic + " " + qualifier
                                   : std::string(topic) + " for " + role + " " + qualifier;
            domain.entries.push_back({std::move(text), topic});
          }
        }
      }
      b.domains_.push_back(std::move(domain));
    }
    return b;
  }();
  return bank;
}

const SeedBank::Domain& SeedBank::find(std::string_view domain) const {
  for (const auto& d : domains_) {
    if (d.name == domain) return d;
  }
  throw Error(ErrorCode::UnknownDomain, std::string(domain));
}

const std::vector<SeedBank::Entry>& SeedBank::seeds(std::string_view domain) const { return find(domain).entries; }

SeedKind SeedBank::kind(std::string_view domain) const { return find(domain).kind; }

std::optional<std::string> SeedBank::topic_of(std::string_view domain, std::string_view seed) const {
  for (const auto& e : find(domain).entries) {
    if (e.text == seed) return e.topic;
  }
  return std::nullopt;
}

ConversationDocument template_generate(std::string_view domain, std::string_view seed, std::uint64_t rng_seed) {
  const auto* t = find_templates(domain);
  if (t == nullptr) throw Error(ErrorCode::UnknownDomain, std::string(domain));
  Picker pick(rng_seed);

  auto topic = SeedBank::standard().topic_of(domain, seed);
  const std::string subject = topic ? *topic : t->topics[pick.below(t->topics.size())];

  ConversationDocument doc;
  doc.id = std::string(domain) + "-" + std::to_string(rng_seed);
  doc.domain = std::string(domain);
  doc.seed = std::string(seed);

  // Facts are drawn without replacement until the pool runs out.
  std::vector<std::size_t> fact_order(t->facts.size());
  for (std::size_t i = 0; i < fact_order.size(); ++i) fact_order[i] = i;
  for (std::size_t i = fact_order.size(); i > 1; --i) std::swap(fact_order[i - 1], fact_order[pick.below(i)]);
  std::size_t next_fact = 0;

  const std::size_t turns = kMinTurns + pick.below(kMaxTurns - kMinTurns + 1);
  for (std::size_t i = 0; i < turns; ++i) {
    DocumentTurn turn;
    const bool last = i + 1 == turns;
    if (i == 0) {
      turn.user = fill(t->openers[pick.below(t->openers.size())], subject);
    } else if (last) {
      turn.user = kClosers[pick.below(kClosers.size())];
    } else {
      turn.user = kFollowUps[pick.below(kFollowUps.size())];
    }

    if (last) {
      turn.responder.push_back(kGoodbyes[pick.below(kGoodbyes.size())]);
      turn.responder_thoughts.emplace_back(kSilenceToken);
    } else {
      if (pick.coin()) {
        turn.responder.push_back(kFillers[pick.below(kFillers.size())]);
        turn.responder_thoughts.emplace_back(kSilenceToken);
      }
      const std::size_t facts = 1 + pick.below(3);
      for (std::size_t f = 0; f < facts; ++f) {
        const auto chunk = fill(t->facts[fact_order[next_fact++ % fact_order.size()]], subject);
        const std::string marker = kMarkers[pick.below(kMarkers.size())];
        turn.responder.push_back(marker.empty() ? chunk : marker + lower_first(chunk));
        turn.responder_thoughts.push_back(chunk);
      }
    }
    doc.turns.push_back(std::move(turn));
  }
  return doc;
}

std::string conversation_prompt(std::string_view domain, std::string_view seed) {
  std::string p;
  p += "Write one complete spoken conversation between a user and a responder in the domain: ";
  p += domain;
  p += ".\nThe conversation is seeded by: ";
  p += seed;
  p +=
      ".\nUse between 8 and 12 turns. The conversation should move toward a concrete, goal-directed outcome.\n"
      "Return only a JSON object of the form\n"
      "{\"turns\": [{\"user\": \"...\", \"responder\": [\"...\"], \"responder_thoughts\": [\"...\"]}]}\n"
      "Each responder entry is one standalone spoken sentence. The responder_thoughts list has exactly one entry "
      "per responder sentence: either a concise knowledge sentence that fully supports that responder sentence, "
      "or exactly ";
  p += kSilenceToken;
  p += " when the sentence is a short conversational filler that needs no knowledge.";
  return p;
}

std::string seed_prompt(std::string_view domain, std::size_t count) {
  const auto* t = find_templates(domain);
  if (t == nullptr) throw Error(ErrorCode::UnknownDomain, std::string(domain));
  std::string what = t->kind == SeedKind::Persona ? "personas of everyday users" : "subtopics";
  return "List " + std::to_string(count) + " distinct " + what + " for " + std::string(domain) +
         " conversations, one per line. Each must be a single short clause, for example \"a parent asking about a "
         "child's fever\". Keep them general: no names, places, hobbies or other niche details.";
}

ConversationDocument llm_generate(std::string_view domain, std::string_view seed, Backend& backend, Clock& clock) {
  if (find_templates(domain) == nullptr) throw Error(ErrorCode::UnknownDomain, std::string(domain));
  DialogueHistory history;
  history.append_user(conversation_prompt(domain, seed));

  std::string reply;
  {
    OffsetClock request_clock(clock);
    KnowledgeQueue queue;
    auto stream = backend.start_turn(history, queue, request_clock);
    for (;;) {
      auto taken = queue.take_until(request_clock, kNever);
      if (auto* chunk = std::get_if<KnowledgeQueue::Chunk>(&taken)) {
        if (!reply.empty()) reply += ' ';
        reply += chunk->text;
        continue;
      }
      if (auto* closed = std::get_if<KnowledgeQueue::Closed>(&taken); closed && closed->error) {
        throw Error(ErrorCode::GenerationError, *closed->error);
      }
      break;
    }
  }

  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw Error(ErrorCode::ParseError, "reply contains no JSON object");
  }
  auto doc = document_from_json(std::string_view(reply).substr(open, close - open + 1));
  if (doc.domain.empty()) doc.domain = std::string(domain);
  if (doc.seed.empty()) doc.seed = std::string(seed);
  auto violations = validate_document(doc);
  if (!violations.empty()) {
    const auto& v = violations.front();
    std::string where = v.turn ? " (turn " + std::to_string(*v.turn) + ")" : "";
    throw Error(ErrorCode::ValidationError, std::string(to_string(v.kind)) + where + ": " + v.detail);
  }
  return doc;
}

double CorpusStats::reject_rate() const {
  const auto total = examples + rejected;
  return total == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(total);
}

double CorpusStats::turns_per_conversation() const {
  return conversations == 0 ? 0.0 : static_cast<double>(turns) / static_cast<double>(conversations);
}

Json CorpusStats::to_json() const {
  Json j;
  j["conversations"] = conversations;
  j["turns"] = turns;
  j["examples"] = examples;
  j["rejected"] = rejected;
  j["reject_rate"] = reject_rate();
  j["turns_per_conversation"] = turns_per_conversation();
  return j;
}

}  // namespace infill
