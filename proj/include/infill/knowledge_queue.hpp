// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <variant>

#include "infill/clock.hpp"
#include "infill/error.hpp"

namespace infill {

/// FIFO between the backend stream reader and the infill loop.
///
/// Producers stamp each chunk with its arrival time. Under a virtual clock a
/// producer may schedule arrivals in the future; they stay invisible to the
/// consumer until the clock reaches them.
class KnowledgeQueue {
 public:
  struct Chunk {
    std::string text;
    Duration arrival{};
  };
  struct Closed {
    Duration at{};
    std::optional<Error> error;
  };
  struct Timeout {};
  using Take = std::variant<Chunk, Closed, Timeout>;

  /// Throws ProtocolViolation after close() or on a decreasing arrival.
  void push(std::string text, Duration arrival);
  /// Marks the end of the backend stream. An error marks an aborted stream.
  void close(Duration at, std::optional<Error> error = std::nullopt);
  /// Records when the backend produced its first text, before segmentation.
  void note_first_output(Duration at);

  /// Waits until a chunk is visible, the stream is closed and drained, or
  /// `deadline` passes, whichever comes first. Visible chunks win ties. With
  /// `hold_open`, a clean close is ignored until the deadline.
  Take take_until(Clock& clock, Duration deadline, bool hold_open = false);

  std::optional<Duration> first_output() const;
  bool closed() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Chunk> items_;
  std::optional<Closed> closed_;
  std::optional<Duration> first_output_;
  Duration last_arrival_{};
};

}  // namespace infill
