// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "infill/adapters.hpp"
#include "infill/knowledge_queue.hpp"
#include "infill/protocol.hpp"

namespace infill {

/// Silence cadence. A period of zero makes the first silence fire at turn
/// start ("respond instantly" mode).
struct SilencePolicy {
  double period_seconds = 1.0;
  int max_consecutive = 3;

  /// Throws InvalidConfig.
  void validate() const;
  Duration period() const { return from_seconds(period_seconds); }
};

struct TurnEnd {
  Duration at{};
  std::optional<Error> error;
};

using NextEvent = std::variant<KnowledgeEvent, TurnEnd>;

/// Produces the next event of the turn. The oldest visible chunk always wins;
/// otherwise a silence fires at last_event_time + period unless the stream has
/// ended or the silence budget is spent. While no event exists yet
/// (`first_event`), a clean close is held off so the turn gets one silence.
/// The returned event's seq is left at 0 for the caller to assign.
NextEvent next_event(KnowledgeQueue& queue, Clock& clock, const SilencePolicy& policy, Duration last_event_time,
                     int consecutive_silence, bool first_event = false);

/// Callbacks fired on the turn loop's thread as the turn progresses.
class TurnObserver {
 public:
  virtual ~TurnObserver() = default;
  virtual void on_event(const KnowledgeEvent&) {}
  virtual void on_phrase_delta(std::size_t /*seq*/, const std::string& /*text*/, Duration /*at*/) {}
  virtual void on_phrase(const ConversationalPhrase&, const Generation&) {}
};

struct TurnOutcome {
  TurnTranscript transcript;
  /// BackendFailure when the knowledge stream aborted; the transcript then
  /// holds every balanced pair completed before the abort.
  std::optional<Error> backend_error;
};

/// Runs one turn. `history` must already end with the user utterance; only
/// the backend sees it. Throws InfillFailure (no fallback text is invented).
TurnOutcome run_turn(std::string_view user_utterance, const DialogueHistory& history, Backend& backend, Infill& infill,
                     Clock& clock, const SilencePolicy& policy, TurnObserver* observer = nullptr);

/// Convenience overload for a standalone turn with no prior history.
TurnOutcome run_turn(std::string_view user_utterance, Backend& backend, Infill& infill, Clock& clock,
                     const SilencePolicy& policy, TurnObserver* observer = nullptr);

/// Conversation-level dialogue manager: keeps the backend history across turns.
class DialogueSession {
 public:
  DialogueSession(Backend& backend, Infill& infill, Clock& clock, SilencePolicy policy, std::string id = "session");

  /// Runs one turn and records it. Errors are rethrown with the turn index
  /// prepended to the message.
  TurnOutcome run(std::string_view user_utterance, TurnObserver* observer = nullptr);

  const DialogueHistory& history() const { return history_; }
  const Conversation& conversation() const { return conversation_; }

 private:
  Backend& backend_;
  Infill& infill_;
  Clock& clock_;
  SilencePolicy policy_;
  DialogueHistory history_;
  Conversation conversation_;
};

Conversation run_conversation(DialogueSession& session, const std::vector<std::string>& utterances);

}  // namespace infill
