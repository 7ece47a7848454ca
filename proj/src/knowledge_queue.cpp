// SPDX-License-Identifier: Apache-2.0

#include "infill/knowledge_queue.hpp"

#include <algorithm>

namespace infill {

void KnowledgeQueue::push(std::string text, Duration arrival) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw Error(ErrorCode::ProtocolViolation, "enqueue after the stream was closed");
    if (arrival < last_arrival_) throw Error(ErrorCode::ProtocolViolation, "chunk arrivals must be non-decreasing");
    last_arrival_ = arrival;
    if (!first_output_) first_output_ = arrival;
    items_.push_back(Chunk{std::move(text), arrival});
  }
  cv_.notify_all();
}

void KnowledgeQueue::close(Duration at, std::optional<Error> error) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = Closed{std::max(at, last_arrival_), std::move(error)};
  }
  cv_.notify_all();
}

void KnowledgeQueue::note_first_output(Duration at) {
  std::lock_guard lock(mutex_);
  if (!first_output_ || at < *first_output_) first_output_ = at;
}

std::optional<Duration> KnowledgeQueue::first_output() const {
  std::lock_guard lock(mutex_);
  return first_output_;
}

bool KnowledgeQueue::closed() const {
  std::lock_guard lock(mutex_);
  return closed_.has_value();
}

KnowledgeQueue::Take KnowledgeQueue::take_until(Clock& clock, Duration deadline, bool hold_open) {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = clock.now();
    if (!items_.empty() && items_.front().arrival <= now) {
      Chunk chunk = std::move(items_.front());
      items_.pop_front();
      return chunk;
    }
    // An aborted stream always ends the wait; a clean close can be held off.
    const bool close_counts = closed_ && (closed_->error || !hold_open);
    if (close_counts && items_.empty() && closed_->at <= now) return *closed_;
    if (deadline <= now) return Timeout{};

    auto target = deadline;
    if (!items_.empty()) target = std::min(target, items_.front().arrival);
    if (close_counts && items_.empty()) target = std::min(target, closed_->at);
    if (target == kNever && clock.is_virtual()) {
      throw Error(ErrorCode::ProtocolViolation, "virtual clock would wait forever: stream never closes");
    }
    clock.wait_until(lock, cv_, target, [&] {
      const auto t = clock.now();
      if (!items_.empty() && items_.front().arrival <= t) return true;
      const bool counts = closed_ && (closed_->error || !hold_open);
      return counts && items_.empty() && closed_->at <= t;
    });
  }
}

}  // namespace infill
