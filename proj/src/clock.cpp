// SPDX-License-Identifier: Apache-2.0

#include "infill/clock.hpp"

#include <thread>

namespace infill {

void VirtualClock::sleep_until(Duration t) {
  if (t == kNever) return;
  auto current = now_.load();
  while (t.count() > current && !now_.compare_exchange_weak(current, t.count())) {
  }
}

void VirtualClock::wait_until(std::unique_lock<std::mutex>& /*lock*/, std::condition_variable& /*cv*/,
                              Duration t, const std::function<bool()>& ready) {
  if (ready()) return;
  // Nothing can arrive before t in a fully scheduled simulation.
  sleep_until(t);
}

Duration SteadyClock::now() const {
  return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - origin_);
}

void SteadyClock::sleep_until(Duration t) {
  if (t == kNever) return;
  std::this_thread::sleep_until(origin_ + t);
}

void SteadyClock::wait_until(std::unique_lock<std::mutex>& lock, std::condition_variable& cv, Duration t,
                             const std::function<bool()>& ready) {
  if (t == kNever) {
    cv.wait(lock, ready);
    return;
  }
  cv.wait_until(lock, origin_ + t, ready);
}

}  // namespace infill
