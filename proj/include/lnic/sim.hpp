#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

namespace lnic::sim {

/// Virtual time in picoseconds.
using Time = std::uint64_t;
inline constexpr Time kNs = 1'000;
inline constexpr Time kUs = 1'000'000;
inline constexpr Time kMs = 1'000'000'000;

inline double to_seconds(Time t) { return static_cast<double>(t) * 1e-12; }
inline double to_us(Time t) { return static_cast<double>(t) * 1e-6; }

/// Picoseconds taken by `cycles` at `clock_hz`, rounded up.
inline Time cycles_to_time(std::uint64_t cycles, std::uint64_t clock_hz) {
  const unsigned __int128 num = static_cast<unsigned __int128>(cycles) * 1'000'000'000'000ull;
  return static_cast<Time>((num + clock_hz - 1) / clock_hz);
}

/// Cycles covering `t` at `clock_hz`, rounded up.
inline std::uint64_t time_to_cycles(Time t, std::uint64_t clock_hz) {
  const unsigned __int128 num = static_cast<unsigned __int128>(t) * clock_hz;
  return static_cast<std::uint64_t>((num + 999'999'999'999ull) / 1'000'000'000'000ull);
}

/// Single virtual clock shared by every simulated component. Events fire in
/// (time, insertion sequence) order, so a run is a pure function of the
/// calls made into it.
class Scheduler {
 public:
  Time now() const { return now_; }

  void at(Time t, std::function<void()> fn) {
    queue_.push(Event{t < now_ ? now_ : t, seq_++, std::move(fn)});
  }
  void after(Time dt, std::function<void()> fn) { at(now_ + dt, std::move(fn)); }

  /// Fires the earliest event; false when none is left.
  bool step() {
    if (queue_.empty()) return false;
    Event e = queue_.top();
    queue_.pop();
    now_ = e.t;
    e.fn();
    return true;
  }

  /// Runs to quiescence, or until the next event lies past `horizon`.
  void run(Time horizon = UINT64_MAX) {
    while (!queue_.empty() && queue_.top().t <= horizon) step();
    if (horizon != UINT64_MAX && now_ < horizon && queue_.empty()) now_ = horizon;
  }

  bool idle() const { return queue_.empty(); }
  std::size_t pending() const { return queue_.size(); }
  std::uint64_t scheduled() const { return seq_; }

 private:
  struct Event {
    Time t;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  Time now_ = 0;
  std::uint64_t seq_ = 0;
};

}  // namespace lnic::sim
