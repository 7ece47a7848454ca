// SPDX-License-Identifier: Apache-2.0

#include "infill/adapters.hpp"

#include "infill/error.hpp"
#include "infill/json_io.hpp"
#include "infill/prompt_format.hpp"

namespace infill {

void DialogueHistory::append_user(std::string text) {
  if (awaiting_assistant()) throw Error(ErrorCode::ProtocolViolation, "history already ends with a user message");
  messages_.push_back({Speaker::User, std::move(text)});
}

void DialogueHistory::append_assistant(std::string text) {
  if (!awaiting_assistant()) throw Error(ErrorCode::ProtocolViolation, "assistant message must follow a user message");
  messages_.push_back({Speaker::Assistant, std::move(text)});
}

void DialogueHistory::rollback_user() {
  if (awaiting_assistant()) messages_.pop_back();
}

// --- scripted backend -------------------------------------------------------

void ScriptedSchedule::validate() const {
  for (const auto& c : chunks) {
    if (c.delay_seconds < 0) throw Error(ErrorCode::InvalidConfig, "schedule delays must be non-negative");
    if (trim(c.text).empty()) throw Error(ErrorCode::InvalidConfig, "schedule texts must be non-empty");
  }
  if (close_delay_seconds < 0) throw Error(ErrorCode::InvalidConfig, "close delay must be non-negative");
}

ScriptedSchedule schedule_from_json(std::string_view document) {
  try {
    auto j = Json::parse(document);
    ScriptedSchedule s;
    for (const auto& c : j.value("chunks", Json::array())) {
      s.chunks.push_back({c.at("delay").get<double>(), c.at("text").get<std::string>()});
    }
    s.close_delay_seconds = j.value("close_delay", 0.0);
    if (j.contains("failure")) s.failure = j["failure"].get<std::string>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad schedule: ") + ex.what());
  }
}

namespace {

std::optional<Error> schedule_failure(const ScriptedSchedule& s) {
  if (!s.failure) return std::nullopt;
  return Error(ErrorCode::BackendFailure, Error(ErrorCode::ProviderError, *s.failure));
}

class NoopStream final : public BackendStream {};

/// Real-time replay on a producer thread.
class ReplayStream final : public BackendStream {
 public:
  ReplayStream(ScriptedSchedule schedule, KnowledgeQueue& queue, Clock& clock)
      : thread_([this, schedule = std::move(schedule), &queue, &clock] { run(schedule, queue, clock); }) {}

  ~ReplayStream() override {
    cancel();
    thread_.join();
  }

  void cancel() override {
    {
      std::lock_guard lock(mutex_);
      cancelled_ = true;
    }
    cv_.notify_all();
  }

 private:
  // False when cancelled before t.
  bool wait(Clock& clock, Duration t) {
    std::unique_lock lock(mutex_);
    clock.wait_until(lock, cv_, t, [this] { return cancelled_; });
    return !cancelled_;
  }

  void run(const ScriptedSchedule& schedule, KnowledgeQueue& queue, Clock& clock) {
    auto t = clock.now();
    for (const auto& c : schedule.chunks) {
      t += from_seconds(c.delay_seconds);
      if (!wait(clock, t)) {
        queue.close(clock.now(), Error(ErrorCode::BackendFailure, "stream cancelled"));
        return;
      }
      queue.push(c.text, clock.now());
    }
    t += from_seconds(schedule.close_delay_seconds);
    if (!wait(clock, t)) {
      queue.close(clock.now(), Error(ErrorCode::BackendFailure, "stream cancelled"));
      return;
    }
    queue.close(clock.now(), schedule_failure(schedule));
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  bool cancelled_ = false;
  std::thread thread_;
};

}  // namespace

ScriptedBackend::ScriptedBackend(ScriptedSchedule schedule, std::string label)
    : label_(std::move(label)) {
  schedule.validate();
  schedule_fn_ = [schedule = std::move(schedule)](const DialogueHistory&) { return schedule; };
}

ScriptedBackend::ScriptedBackend(ScheduleFn schedule_fn, std::string label)
    : schedule_fn_(std::move(schedule_fn)), label_(std::move(label)) {}

std::unique_ptr<BackendStream> ScriptedBackend::start_turn(const DialogueHistory& history, KnowledgeQueue& queue,
                                                           Clock& clock) {
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(history);
  }
  auto schedule = schedule_fn_(history);
  schedule.validate();
  if (!clock.is_virtual()) return std::make_unique<ReplayStream>(std::move(schedule), queue, clock);

  auto t = clock.now();
  for (const auto& c : schedule.chunks) {
    t += from_seconds(c.delay_seconds);
    queue.push(c.text, t);
  }
  t += from_seconds(schedule.close_delay_seconds);
  queue.close(t, schedule_failure(schedule));
  return std::make_unique<NoopStream>();
}

std::vector<DialogueHistory> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

// --- scripted infill --------------------------------------------------------

std::optional<std::string> last_knowledge(const std::string& rendered_context) {
  auto messages = parse_messages(rendered_context);
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role != Role::Knowledge) continue;
    if (it->content == kSilenceToken) return std::nullopt;
    return it->content;
  }
  throw Error(ErrorCode::NotPending, "context has no knowledge message");
}

ScriptedInfill::PhraseFn ScriptedInfill::echo(std::string silence_phrase) {
  return [silence_phrase = std::move(silence_phrase)](const std::string& context) {
    auto chunk = last_knowledge(context);
    return chunk ? *chunk : silence_phrase;
  };
}

ScriptedInfill::PhraseFn ScriptedInfill::canned(std::string text) {
  return [text = std::move(text)](const std::string&) { return text; };
}

ScriptedInfill::ScriptedInfill(double latency_seconds, PhraseFn phrase_fn, std::string label)
    : latency_(from_seconds(latency_seconds)), phrase_fn_(std::move(phrase_fn)), label_(std::move(label)) {
  if (latency_seconds < 0) throw Error(ErrorCode::InvalidConfig, "infill latency must be non-negative");
}

Generation ScriptedInfill::generate(const std::string& rendered_context, Clock& clock) {
  ++calls_;
  Generation g;
  g.started = clock.now();
  g.text = phrase_fn_(rendered_context);
  if (trim(g.text).empty() || g.text.find(kSilenceToken) != std::string::npos) {
    throw Error(ErrorCode::InfillFailure, "scripted phrase is empty or contains the silence token");
  }
  clock.sleep_until(g.started + latency_);
  g.first_output = clock.now();
  return g;
}

std::string first_phrase_line(std::string_view completion) {
  std::size_t pos = 0;
  while (pos <= completion.size()) {
    auto end = completion.find('\n', pos);
    if (end == std::string_view::npos) end = completion.size();
    std::string line(completion.substr(pos, end - pos));
    for (auto at = line.find(kSilenceToken); at != std::string::npos; at = line.find(kSilenceToken)) {
      line.erase(at, kSilenceToken.size());
    }
    line = trim(line);
    if (!line.empty()) return line;
    pos = end + 1;
  }
  return {};
}

ParsedUrl parse_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorCode::InvalidConfig, "url needs a scheme: " + std::string(url));
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error(ErrorCode::InvalidConfig, "unsupported scheme: " + std::string(url));
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string_view::npos) {
    out.scheme_host_port = std::string(url);
    out.path = "/";
  } else {
    out.scheme_host_port = std::string(url.substr(0, path_start));
    out.path = std::string(url.substr(path_start));
  }
  if (out.scheme_host_port.size() <= scheme_end + 3) throw Error(ErrorCode::InvalidConfig, "url has no host");
  return out;
}

}  // namespace infill
