#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace colcal {

/// A single brightness-change event. Polarity is +1 (brighter) or -1 (darker).
struct Event {
  std::uint64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Events sorted by timestamp (non-decreasing) on a sensor of known size.
struct EventStream {
  int width = 0;
  int height = 0;
  std::vector<Event> events;

  bool empty() const { return events.empty(); }
  std::size_t size() const { return events.size(); }
};

enum class EventFormat { Csv, Binary };
enum class AccumMode { Count, PolarityBalance };

EventFormat parse_event_format(std::string_view name);
AccumMode parse_accum_mode(std::string_view name);
std::string_view to_string(EventFormat format);
std::string_view to_string(AccumMode mode);

inline constexpr std::int64_t kDefaultWindowUs = 33'000;

/// Dense accumulation image over the half-open interval [t_start, t_end).
/// Values are raw counts; scaling to 8 bits happens only on PGM export.
struct AccumFrame {
  int width = 0;
  int height = 0;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;
  std::vector<double> values;  // row-major, size width * height

  AccumFrame() = default;
  AccumFrame(int w, int h, std::uint64_t start, std::uint64_t end)
      : width(w), height(h), t_start(start), t_end(end),
        values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double total() const;

  friend bool operator==(const AccumFrame&, const AccumFrame&) = default;
};

/// Throws ValidationError on polarity or sensor-bound violations.
void validate_event(const Event& e, int width, int height);

// Sorts by timestamp, stable so equal-time events keep file order.
void sort_events(EventStream& stream);

/// Reads an event file. The sensor size bounds are checked for every event;
/// pass 0 to infer them from the maximal coordinates seen.
EventStream read_events(const std::filesystem::path& path, EventFormat format,
                        int width = 0, int height = 0);

void write_events(const std::filesystem::path& path, const EventStream& stream,
                  EventFormat format);

// Parses CSV event text (used by read_events; exposed for tests).
EventStream parse_events_csv(std::string_view text, int width = 0, int height = 0);
EventStream parse_events_binary(std::span<const std::byte> bytes, int width = 0,
                                int height = 0);

inline constexpr std::size_t kBinaryRecordSize = 13;

/// Partitions [t_first, t_last] into consecutive windows of window_us and
/// accumulates each into a frame. Empty windows are still emitted; an empty
/// stream yields no frames.
std::vector<AccumFrame> accumulate(const EventStream& stream, std::int64_t window_us,
                                   AccumMode mode = AccumMode::Count);

/// Sums frames pixel-wise into one frame spanning all of them.
AccumFrame merge_frames(std::span<const AccumFrame> frames);

void write_pgm(const std::filesystem::path& path, const AccumFrame& frame);
void write_frame_csv(const std::filesystem::path& path, const AccumFrame& frame);
AccumFrame read_frame_csv(const std::filesystem::path& path);

}  // namespace colcal
