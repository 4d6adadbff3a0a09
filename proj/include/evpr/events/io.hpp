#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "evpr/events/event.hpp"

namespace evpr::events {

// Event file format (bit-exact, UTF-8 text):
//   line 1:            "# events W H"
//   every other line:  "t x y p"   single spaces, t ascending, p in {-1, 1}
//
// Database manifest: one record per bin, tab-separated,
//   line 1:            "# manifest"
//   every other line:  "path<TAB>place_id<TAB>x<TAB>y"
// with path relative to the manifest's directory and coordinates in planar
// meters, serialized shortest-round-trip so reading them back is exact.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::int64_t parse_int(std::string_view token, std::size_t line_no, const std::string& what) {
  std::int64_t value = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                    std::string(token) + "'");
  return value;
}

inline double parse_double(std::string_view token, std::size_t line_no, const std::string& what) {
  double value = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw DataError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                    std::string(token) + "'");
  return value;
}

inline std::vector<std::string_view> split_on(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

inline void write_events(const EventBin& bin, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "# events " << bin.geometry().width << ' ' << bin.geometry().height << '\n';
  for (const Event& e : bin.events())
    out << e.t << ' ' << e.x << ' ' << e.y << ' ' << e.p << '\n';
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

/// Reads an event file. The bin id is taken from the file stem; the format
/// itself carries no id.
inline EventBin read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "': empty file, header expected");
  std::size_t line_no = 1;
  const auto head = detail::split_on(line, ' ');
  if (head.size() != 4 || head[0] != "#" || head[1] != "events")
    throw DataError("line 1: expected '# events W H' header");
  Geometry geom;
  geom.width = static_cast<int>(detail::parse_int(head[2], line_no, "width"));
  geom.height = static_cast<int>(detail::parse_int(head[3], line_no, "height"));

  std::vector<Event> events;
  std::int64_t prev_t = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw DataError("line " + std::to_string(line_no) + ": empty line");
    const auto tok = detail::split_on(line, ' ');
    if (tok.size() != 4)
      throw DataError("line " + std::to_string(line_no) + ": expected 't x y p', got '" + line + "'");
    Event e;
    e.t = detail::parse_int(tok[0], line_no, "timestamp");
    e.x = static_cast<int>(detail::parse_int(tok[1], line_no, "x"));
    e.y = static_cast<int>(detail::parse_int(tok[2], line_no, "y"));
    e.p = static_cast<int>(detail::parse_int(tok[3], line_no, "polarity"));
    if (e.t < prev_t)
      throw DataError("line " + std::to_string(line_no) + ": timestamps must be non-decreasing");
    prev_t = e.t;
    events.push_back(e);
  }
  return EventBin(std::move(events), geom, path.stem().string());
}

/// One manifest record: an event-bin file plus its geo tag.
struct ManifestRecord {
  std::string path;      // relative to the manifest file
  std::string place_id;  // opaque grouping key for split logic
  double x = 0.0;        // planar meters
  double y = 0.0;
};

inline void write_manifest(const std::vector<ManifestRecord>& records,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "# manifest\n";
  for (const auto& r : records)
    out << r.path << '\t' << r.place_id << '\t' << detail::format_double(r.x) << '\t'
        << detail::format_double(r.y) << '\n';
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "# manifest")
    throw DataError("'" + path.string() + "': expected '# manifest' header");
  std::vector<ManifestRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tok = detail::split_on(line, '\t');
    if (tok.size() != 4)
      throw DataError("line " + std::to_string(line_no) +
                      ": expected 'path<TAB>place<TAB>x<TAB>y'");
    ManifestRecord r;
    r.path = std::string(tok[0]);
    r.place_id = std::string(tok[1]);
    r.x = detail::parse_double(tok[2], line_no, "x coordinate");
    r.y = detail::parse_double(tok[3], line_no, "y coordinate");
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace evpr::events
