#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "evpr/events/event.hpp"

namespace evpr::events {

/// Partitioning policy for cutting a stream into bins.
struct SplitPolicy {
  enum class Kind { FixedCount, FixedDuration };
  Kind kind = Kind::FixedCount;
  std::int64_t count = 0;        // events per bin (FixedCount)
  std::int64_t duration_us = 0;  // window length (FixedDuration)

  static SplitPolicy fixed_count(std::int64_t n) {
    return SplitPolicy{Kind::FixedCount, n, 0};
  }
  static SplitPolicy fixed_duration(std::int64_t us) {
    return SplitPolicy{Kind::FixedDuration, 0, us};
  }
};

/// Cuts a bin into consecutive sub-bins. Fixed-count bins all hold N events
/// except possibly the last; fixed-duration bins cover contiguous
/// [t0 + k*T, t0 + (k+1)*T) windows starting at the first event, including
/// interior windows that happen to be empty. Concatenating the result
/// reproduces the input stream exactly.
inline std::vector<EventBin> split_stream(const EventBin& bin, const SplitPolicy& policy) {
  std::vector<EventBin> out;
  const auto& ev = bin.events();
  auto child_id = [&bin](std::size_t k) { return bin.id() + "#" + std::to_string(k); };

  if (policy.kind == SplitPolicy::Kind::FixedCount) {
    if (policy.count <= 0) throw ParamError("split_stream: event count must be > 0");
    const auto n = static_cast<std::size_t>(policy.count);
    for (std::size_t start = 0; start < ev.size(); start += n) {
      const std::size_t end = std::min(start + n, ev.size());
      out.emplace_back(std::vector<Event>(ev.begin() + static_cast<std::ptrdiff_t>(start),
                                          ev.begin() + static_cast<std::ptrdiff_t>(end)),
                       bin.geometry(), child_id(out.size()));
    }
    return out;
  }

  if (policy.duration_us <= 0) throw ParamError("split_stream: duration must be > 0");
  if (ev.empty()) return out;
  const std::int64_t t0 = ev.front().t;
  const std::int64_t span = policy.duration_us;
  std::size_t cursor = 0;
  std::int64_t window_start = t0;
  while (cursor < ev.size()) {
    const std::int64_t window_end = window_start + span;
    std::size_t end = cursor;
    while (end < ev.size() && ev[end].t < window_end) ++end;
    out.emplace_back(std::vector<Event>(ev.begin() + static_cast<std::ptrdiff_t>(cursor),
                                        ev.begin() + static_cast<std::ptrdiff_t>(end)),
                     bin.geometry(), child_id(out.size()));
    cursor = end;
    window_start = window_end;
  }
  return out;
}

}  // namespace evpr::events
