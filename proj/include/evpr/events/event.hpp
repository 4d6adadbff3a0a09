#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evpr/errors.hpp"

namespace evpr::events {

/// One brightness-change event: pixel (x, y), timestamp in integer
/// microseconds, polarity +1 (brightness up) or -1 (brightness down).
struct Event {
  int x = 0;
  int y = 0;
  std::int64_t t = 0;
  int p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Sensor geometry in pixels.
struct Geometry {
  int width = 0;
  int height = 0;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// A time-ordered slice of an event stream belonging to one observation.
/// Immutable after construction; the constructor validates the invariants
/// (non-decreasing timestamps, pixels inside the geometry, polarity in
/// {-1, +1}). Empty bins are legal.
class EventBin {
 public:
  EventBin() = default;
  EventBin(std::vector<Event> events, Geometry geometry, std::string id)
      : events_(std::move(events)), geometry_(geometry), id_(std::move(id)) {
    if (geometry_.width <= 0 || geometry_.height <= 0)
      throw DataError("event bin '" + id_ + "': geometry must be positive");
    std::int64_t prev = -1;
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const Event& e = events_[i];
      if (e.p != 1 && e.p != -1)
        throw DataError("event bin '" + id_ + "': polarity must be -1 or 1 at index " +
                        std::to_string(i));
      if (e.x < 0 || e.x >= geometry_.width || e.y < 0 || e.y >= geometry_.height)
        throw DataError("event bin '" + id_ + "': pixel out of bounds at index " +
                        std::to_string(i));
      if (e.t < 0)
        throw DataError("event bin '" + id_ + "': negative timestamp at index " +
                        std::to_string(i));
      if (e.t < prev)
        throw DataError("event bin '" + id_ + "': timestamps decrease at index " +
                        std::to_string(i));
      prev = e.t;
    }
  }

  const std::vector<Event>& events() const { return events_; }
  Geometry geometry() const { return geometry_; }
  const std::string& id() const { return id_; }

  bool empty() const { return events_.empty(); }
  std::size_t size() const { return events_.size(); }
  std::int64_t t_first() const { return events_.front().t; }
  std::int64_t t_last() const { return events_.back().t; }

  /// Stored-field equality: events and geometry. The id is bookkeeping
  /// (it is not part of the on-disk event format) and does not participate.
  bool same_content(const EventBin& o) const {
    return geometry_ == o.geometry_ && events_ == o.events_;
  }

 private:
  std::vector<Event> events_;
  Geometry geometry_{1, 1};
  std::string id_;
};

/// Idealized event camera: one positive contrast threshold for both
/// polarities. Optional per-pixel threshold jitter emulates fixed-pattern
/// variation for robustness experiments; it defaults to off.
struct CameraModel {
  double contrast_threshold = 0.2;  // log-intensity units, > 0
  double threshold_jitter = 0.0;    // relative stddev of per-pixel jitter
  std::uint64_t jitter_seed = 0;

  void validate() const {
    if (!(contrast_threshold > 0.0))
      throw ParamError("camera model: contrast threshold must be > 0");
    if (threshold_jitter < 0.0)
      throw ParamError("camera model: threshold jitter must be >= 0");
  }
};

}  // namespace evpr::events
