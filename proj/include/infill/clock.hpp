// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <mutex>

namespace infill {

/// Time since turn start. Integer microseconds keep virtual-time arithmetic exact.
using Duration = std::chrono::microseconds;

inline constexpr Duration kNever = Duration::max();

inline double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e6; }

inline Duration from_seconds(double s) { return Duration(std::llround(s * 1e6)); }

/// Monotone time source. Every wait in the runtime goes through wait_until so
/// that a virtual clock can replace real sleeping in tests.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual Duration now() const = 0;
  virtual void sleep_until(Duration t) = 0;

  /// Blocks on `cv` (with `lock` held) until `ready()` or until now() >= t.
  /// Virtual clocks jump straight to t when nothing is ready: callers must
  /// only pass a t at or before the next thing that could make ready() true.
  virtual void wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv, Duration t,
                          const std::function<bool()>& ready) = 0;

  /// True when time only advances through sleep_until/wait_until calls.
  virtual bool is_virtual() const = 0;
};

/// Discrete-event clock: sleeping advances time instantly.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Duration start = Duration::zero()) : now_(start.count()) {}

  Duration now() const override { return Duration(now_.load()); }
  void sleep_until(Duration t) override;
  void wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv, Duration t,
                  const std::function<bool()>& ready) override;
  bool is_virtual() const override { return true; }

  void advance(Duration by) { sleep_until(now() + by); }

 private:
  std::atomic<Duration::rep> now_;
};

/// Wall clock measured from construction.
class SteadyClock final : public Clock {
 public:
  SteadyClock() : origin_(std::chrono::steady_clock::now()) {}

  Duration now() const override;
  void sleep_until(Duration t) override;
  void wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv, Duration t,
                  const std::function<bool()>& ready) override;
  bool is_virtual() const override { return false; }

 private:
  std::chrono::steady_clock::time_point origin_;
};

/// View of another clock whose zero is the moment of construction. Used to
/// give each turn its own time origin.
class OffsetClock final : public Clock {
 public:
  explicit OffsetClock(Clock& base) : base_(base), origin_(base.now()) {}

  Duration now() const override { return base_.now() - origin_; }
  void sleep_until(Duration t) override { base_.sleep_until(shift(t)); }
  void wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv, Duration t,
                  const std::function<bool()>& ready) override {
    base_.wait_until(lock, cv, shift(t), ready);
  }
  bool is_virtual() const override { return base_.is_virtual(); }

  Duration origin() const { return origin_; }

 private:
  Duration shift(Duration t) const { return t == kNever ? kNever : t + origin_; }

  Clock& base_;
  Duration origin_;
};

}  // namespace infill
