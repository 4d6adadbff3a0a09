#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "evpr/core/random.hpp"
#include "evpr/events/event.hpp"
#include "evpr/events/io.hpp"
#include "evpr/events/simulate.hpp"
#include "evpr/mining/database.hpp"

namespace evpr::toy {

/// Synthetic mini-world: places on a loop, each with its own procedural
/// texture. Every bin is an independent pan of a virtual camera across the
/// place's texture, run through the contrast-threshold event simulator, so
/// bins of one place look alike and bins of different places do not.
struct ToyWorldConfig {
  int places = 36;
  int bins_per_place = 8;
  int width = 64;
  int height = 64;
  int frames_per_bin = 10;
  std::int64_t frame_interval_us = 10000;
  double contrast_threshold = 0.35;
  double place_spacing_m = 50.0;    // chord between neighboring places
  double coord_jitter_m = 2.0;      // per-bin scatter around the place
  double pan_speed_px = 2.0;        // horizontal pan per frame
  double bin_stride_px = 3.0;       // start-offset stagger between bins
  double shared_amplitude = 1.0;    // strength of structure common to all places
  double intensity_noise = 0.1;     // per-pixel log-intensity noise per frame
  std::uint64_t seed = 7;
};

namespace detail {

struct Blob {
  int kind = 0;  // 0 bar, 1 disc, 2 gaussian
  double cx = 0, cy = 0;
  double nx = 1, ny = 0;  // bar normal
  double half_thickness = 2, half_length = 10;
  double radius = 4;
  double sigma = 3;
  double amplitude = 0.5;
};

/// Piecewise-smooth intensity field built from random shapes: a layer unique
/// to the place plus a layer shared by every place (the "road"), so raw
/// appearance statistics overlap across places and the embedding has to
/// learn which structure identifies a place.
class Texture {
 public:
  Texture(int field_width, int field_height, std::uint64_t place_seed,
          std::uint64_t shared_seed, double shared_amplitude)
      : width_(field_width), height_(field_height) {
    add_blobs(place_seed, 1.0);
    if (shared_amplitude > 0.0) add_blobs(shared_seed, shared_amplitude);
    // Rasterize once; frames sample this grid bilinearly.
    grid_.assign(static_cast<std::size_t>(width_) * height_, 0.0);
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        grid_[static_cast<std::size_t>(y) * width_ + x] = evaluate(x + 0.5, y + 0.5);
  }

  /// Bilinear sample with clamped borders.
  double sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0, fy = y - y0;
    const double a = grid_[static_cast<std::size_t>(y0) * width_ + x0];
    const double b = grid_[static_cast<std::size_t>(y0) * width_ + x1];
    const double c = grid_[static_cast<std::size_t>(y1) * width_ + x0];
    const double d = grid_[static_cast<std::size_t>(y1) * width_ + x1];
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
  }

 private:
  void add_blobs(std::uint64_t seed, double scale) {
    rng::Engine engine(seed);
    const int count = 10 + static_cast<int>(engine.uniform_int(0, 6));
    for (int i = 0; i < count; ++i) {
      Blob b;
      b.kind = static_cast<int>(engine.uniform_int(0, 2));
      b.cx = engine.uniform(0.0, static_cast<double>(width_));
      b.cy = engine.uniform(0.0, static_cast<double>(height_));
      const double angle = engine.uniform(0.0, 3.14159265358979323846);
      b.nx = std::cos(angle);
      b.ny = std::sin(angle);
      b.half_thickness = engine.uniform(1.5, 4.0);
      b.half_length = engine.uniform(8.0, 24.0);
      b.radius = engine.uniform(3.0, 9.0);
      b.sigma = engine.uniform(2.5, 6.0);
      b.amplitude =
          scale * engine.uniform(0.35, 0.9) * (engine.uniform01() < 0.5 ? -1.0 : 1.0);
      blobs_.push_back(b);
    }
  }

  double evaluate(double x, double y) const {
    double v = 0.4;
    for (const Blob& b : blobs_) {
      const double dx = x - b.cx, dy = y - b.cy;
      switch (b.kind) {
        case 0: {  // bar
          const double along = dx * -b.ny + dy * b.nx;
          const double across = dx * b.nx + dy * b.ny;
          if (std::fabs(across) < b.half_thickness && std::fabs(along) < b.half_length)
            v += b.amplitude;
          break;
        }
        case 1: {  // disc
          if (dx * dx + dy * dy < b.radius * b.radius) v += b.amplitude;
          break;
        }
        default: {  // gaussian bump
          v += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
          break;
        }
      }
    }
    return std::clamp(v, 0.08, 2.5);
  }

  int width_, height_;
  std::vector<Blob> blobs_;
  std::vector<double> grid_;
};

}  // namespace detail

/// Generates the world as an in-memory database.
inline mining::GeoTaggedDatabase generate_toy_world(const ToyWorldConfig& cfg) {
  if (cfg.places < 2 || cfg.bins_per_place < 1)
    throw ParamError("toy world: need at least 2 places and 1 bin per place");
  const double loop_radius =
      cfg.place_spacing_m * cfg.places / (2.0 * 3.14159265358979323846);
  const double max_offset = cfg.bin_stride_px * cfg.bins_per_place +
                            cfg.pan_speed_px * cfg.frames_per_bin + 4.0;
  const int field_width = cfg.width + static_cast<int>(std::ceil(max_offset));

  std::vector<mining::DbEntry> entries;
  entries.reserve(static_cast<std::size_t>(cfg.places) * cfg.bins_per_place);
  char place_name[32];
  const std::uint64_t shared_seed = rng::derive_seed(cfg.seed, "toy-shared-texture");
  for (int p = 0; p < cfg.places; ++p) {
    const detail::Texture texture(field_width, cfg.height,
                                  rng::derive_seed(cfg.seed, "toy-texture",
                                                   static_cast<std::uint64_t>(p)),
                                  shared_seed, cfg.shared_amplitude);
    const double theta = 2.0 * 3.14159265358979323846 * p / cfg.places;
    const double px = loop_radius * std::cos(theta);
    const double py = loop_radius * std::sin(theta);
    std::snprintf(place_name, sizeof(place_name), "p%03d", p);

    for (int b = 0; b < cfg.bins_per_place; ++b) {
      rng::Engine bin_rng(rng::derive_seed(cfg.seed, "toy-bin",
                                           static_cast<std::uint64_t>(p) * 10000 + b));
      const double x0 = cfg.bin_stride_px * b + bin_rng.uniform(0.0, 1.0);
      const double y_bob = bin_rng.uniform(-1.0, 1.0);
      const double speed = cfg.pan_speed_px * bin_rng.uniform(0.92, 1.08);

      std::vector<events::Frame> frames;
      frames.reserve(static_cast<std::size_t>(cfg.frames_per_bin));
      for (int f = 0; f < cfg.frames_per_bin; ++f) {
        events::Frame frame;
        frame.t = static_cast<std::int64_t>(f) * cfg.frame_interval_us;
        frame.geometry = {cfg.width, cfg.height};
        frame.intensity.resize(static_cast<std::size_t>(cfg.width) * cfg.height);
        const double off = x0 + speed * f;
        for (int y = 0; y < cfg.height; ++y)
          for (int x = 0; x < cfg.width; ++x) {
            double v = texture.sample(x + off, y + y_bob);
            if (cfg.intensity_noise > 0.0)
              v *= std::exp(cfg.intensity_noise * bin_rng.normal());
            frame.intensity[static_cast<std::size_t>(y) * cfg.width + x] = v;
          }
        frames.push_back(std::move(frame));
      }

      mining::DbEntry entry;
      entry.id = std::string(place_name) + "_b" + std::to_string(b);
      entry.place_id = place_name;
      const double jr = cfg.coord_jitter_m * std::sqrt(bin_rng.uniform01());
      const double ja = bin_rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      entry.x = px + jr * std::cos(ja);
      entry.y = py + jr * std::sin(ja);
      entry.bin = events::simulate_events(frames, events::CameraModel{cfg.contrast_threshold},
                                          entry.id);
      entries.push_back(std::move(entry));
    }
  }
  return mining::GeoTaggedDatabase(std::move(entries));
}

/// Writes a generated world to disk (event files + manifest) and returns the
/// manifest path.
inline std::filesystem::path write_toy_world(const mining::GeoTaggedDatabase& db,
                                             const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "bins");
  std::vector<events::ManifestRecord> records;
  for (int i = 0; i < db.size(); ++i) {
    const auto& e = db.entry(i);
    const std::string rel = "bins/" + e.id + ".events";
    events::write_events(e.bin, out_dir / rel);
    records.push_back(events::ManifestRecord{rel, e.place_id, e.x, e.y});
  }
  const auto manifest = out_dir / "manifest.tsv";
  events::write_manifest(records, manifest);
  return manifest;
}

}  // namespace evpr::toy
