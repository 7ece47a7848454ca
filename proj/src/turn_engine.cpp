// SPDX-License-Identifier: Apache-2.0

#include "infill/turn_engine.hpp"

#include "infill/prompt_format.hpp"

namespace infill {

void SilencePolicy::validate() const {
  if (!(period_seconds >= 0)) throw Error(ErrorCode::InvalidConfig, "silence.period_seconds must be >= 0");
  if (max_consecutive < 1) throw Error(ErrorCode::InvalidConfig, "silence.max_consecutive must be >= 1");
}

NextEvent next_event(KnowledgeQueue& queue, Clock& clock, const SilencePolicy& policy, Duration last_event_time,
                     int consecutive_silence, bool first_event) {
  const bool may_be_silent = first_event || consecutive_silence < policy.max_consecutive;
  const Duration deadline = may_be_silent ? last_event_time + policy.period() : kNever;

  auto taken = queue.take_until(clock, deadline, first_event);
  if (auto* chunk = std::get_if<KnowledgeQueue::Chunk>(&taken)) {
    return KnowledgeEvent{0, EventKind::Chunk, std::move(chunk->text), chunk->arrival};
  }
  if (auto* closed = std::get_if<KnowledgeQueue::Closed>(&taken)) {
    return TurnEnd{closed->at, std::move(closed->error)};
  }
  return KnowledgeEvent{0, EventKind::Silence, {}, deadline};
}

TurnOutcome run_turn(std::string_view user_utterance, const DialogueHistory& history, Backend& backend, Infill& infill,
                     Clock& clock, const SilencePolicy& policy, TurnObserver* observer) {
  policy.validate();
  auto state = TurnState::open(user_utterance);
  OffsetClock turn_clock(clock);
  KnowledgeQueue queue;
  auto stream = backend.start_turn(history, queue, turn_clock);

  TurnOutcome outcome;
  Duration last_event_time = Duration::zero();
  int consecutive_silence = 0;
  for (;;) {
    auto next = next_event(queue, turn_clock, policy, last_event_time, consecutive_silence, state.events().empty());
    if (auto* end = std::get_if<TurnEnd>(&next)) {
      outcome.backend_error = std::move(end->error);
      break;
    }
    auto& event = std::get<KnowledgeEvent>(next);
    event.seq = state.append_event(event.kind, event.text, event.timestamp);
    last_event_time = event.timestamp;
    consecutive_silence = event.kind == EventKind::Silence ? consecutive_silence + 1 : 0;
    if (observer) observer->on_event(event);

    // Chunks arriving during generation stay queued; the phrase is never cut short.
    Generation generation;
    try {
      generation = infill.generate(render_context(state), turn_clock);
    } catch (const Error& e) {
      stream->cancel();
      if (e.code() == ErrorCode::InfillFailure) throw;
      throw Error(ErrorCode::InfillFailure, e);
    }
    if (observer) observer->on_phrase_delta(event.seq, generation.text, generation.first_output);
    const auto seq = state.append_phrase(generation.text, generation.first_output);
    if (observer) observer->on_phrase(state.phrases()[seq], generation);
  }
  stream.reset();
  outcome.transcript = state.close();
  return outcome;
}

TurnOutcome run_turn(std::string_view user_utterance, Backend& backend, Infill& infill, Clock& clock,
                     const SilencePolicy& policy, TurnObserver* observer) {
  DialogueHistory history;
  history.append_user(trim(user_utterance));
  return run_turn(user_utterance, history, backend, infill, clock, policy, observer);
}

DialogueSession::DialogueSession(Backend& backend, Infill& infill, Clock& clock, SilencePolicy policy, std::string id)
    : backend_(backend), infill_(infill), clock_(clock), policy_(policy) {
  policy_.validate();
  conversation_.id = std::move(id);
}

TurnOutcome DialogueSession::run(std::string_view user_utterance, TurnObserver* observer) {
  auto utterance = trim(user_utterance);
  if (utterance.empty()) throw Error(ErrorCode::EmptyUtterance, "user utterance is blank");
  const auto turn_index = conversation_.turns.size();
  history_.append_user(utterance);
  TurnOutcome outcome;
  try {
    outcome = run_turn(utterance, history_, backend_, infill_, clock_, policy_, observer);
  } catch (const Error& e) {
    history_.rollback_user();
    throw Error(e.code(), "turn " + std::to_string(turn_index) + ": " + e.what());
  }
  outcome.transcript = outcome.transcript.with_turn_index(turn_index);
  if (outcome.transcript.size() > 0) {
    history_.append_assistant(outcome.transcript.joined_phrases());
  } else {
    history_.rollback_user();
  }
  conversation_.turns.push_back(outcome.transcript);
  return outcome;
}

Conversation run_conversation(DialogueSession& session, const std::vector<std::string>& utterances) {
  for (const auto& u : utterances) session.run(u);
  return session.conversation();
}

}  // namespace infill
