#include "colcal/event_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "colcal/error.hpp"

namespace colcal {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool looks_like_header(std::string_view line) {
  for (char c : line) {
    if (std::isalpha(static_cast<unsigned char>(c))) return true;
  }
  return false;
}

void finish_stream(EventStream& stream, int width, int height) {
  if (width <= 0 || height <= 0) {
    int max_x = -1;
    int max_y = -1;
    for (const auto& e : stream.events) {
      max_x = std::max<int>(max_x, e.x);
      max_y = std::max<int>(max_y, e.y);
    }
    stream.width = width > 0 ? width : max_x + 1;
    stream.height = height > 0 ? height : max_y + 1;
  } else {
    stream.width = width;
    stream.height = height;
  }
  sort_events(stream);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

EventFormat parse_event_format(std::string_view name) {
  if (name == "csv") return EventFormat::Csv;
  if (name == "binary" || name == "bin") return EventFormat::Binary;
  throw Error(ErrorCode::Validation, "unknown event format '" + std::string(name) + "'");
}

AccumMode parse_accum_mode(std::string_view name) {
  if (name == "count") return AccumMode::Count;
  if (name == "polarity_balance") return AccumMode::PolarityBalance;
  throw Error(ErrorCode::Validation, "unknown accumulation mode '" + std::string(name) + "'");
}

std::string_view to_string(EventFormat format) {
  return format == EventFormat::Csv ? "csv" : "binary";
}

std::string_view to_string(AccumMode mode) {
  return mode == AccumMode::Count ? "count" : "polarity_balance";
}

double AccumFrame::total() const {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum;
}

void validate_event(const Event& e, int width, int height) {
  if (e.p != 1 && e.p != -1) {
    throw Error(ErrorCode::Validation,
                "polarity must be +1 or -1, got " + std::to_string(int{e.p}));
  }
  if (width > 0 && e.x >= width) {
    throw Error(ErrorCode::Validation, "x=" + std::to_string(e.x) + " outside sensor width " +
                                           std::to_string(width));
  }
  if (height > 0 && e.y >= height) {
    throw Error(ErrorCode::Validation, "y=" + std::to_string(e.y) + " outside sensor height " +
                                           std::to_string(height));
  }
}

void sort_events(EventStream& stream) {
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
}

EventStream parse_events_csv(std::string_view text, int width, int height) {
  EventStream stream;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line_no == 1 && looks_like_header(line)) continue;

    auto fields = split(line, ',');
    if (fields.size() != 4) {
      throw ParseError(line_no,
                       "line " + std::to_string(line_no) + ": expected 4 fields t_us,x,y,p");
    }
    Event e;
    int p = 0;
    if (!parse_int(fields[0], e.t_us) || !parse_int(fields[1], e.x) ||
        !parse_int(fields[2], e.y) || !parse_int(fields[3], p)) {
      throw ParseError(line_no, "line " + std::to_string(line_no) + ": malformed event record");
    }
    if (p != 1 && p != -1) {
      throw Error(ErrorCode::Validation, "line " + std::to_string(line_no) +
                                             ": polarity must be +1 or -1, got " +
                                             std::to_string(p));
    }
    e.p = static_cast<std::int8_t>(p);
    validate_event(e, width, height);
    stream.events.push_back(e);
  }
  finish_stream(stream, width, height);
  return stream;
}

EventStream parse_events_binary(std::span<const std::byte> bytes, int width, int height) {
  if (bytes.size() % kBinaryRecordSize != 0) {
    throw ParseError(0, "binary event file size " + std::to_string(bytes.size()) +
                            " is not a multiple of " + std::to_string(kBinaryRecordSize));
  }
  EventStream stream;
  const std::size_t n = bytes.size() / kBinaryRecordSize;
  stream.events.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + i * kBinaryRecordSize);
    Event e;
    e.t_us = 0;
    for (int b = 7; b >= 0; --b) e.t_us = (e.t_us << 8) | rec[b];
    e.x = static_cast<std::uint16_t>(rec[8] | (rec[9] << 8));
    e.y = static_cast<std::uint16_t>(rec[10] | (rec[11] << 8));
    e.p = static_cast<std::int8_t>(rec[12]);
    if (e.p != 1 && e.p != -1) {
      throw Error(ErrorCode::Validation, "record " + std::to_string(i + 1) +
                                             ": polarity must be +1 or -1, got " +
                                             std::to_string(int{e.p}));
    }
    validate_event(e, width, height);
    stream.events.push_back(e);
  }
  finish_stream(stream, width, height);
  return stream;
}

EventStream read_events(const std::filesystem::path& path, EventFormat format, int width,
                        int height) {
  const std::string data = read_file(path);
  if (format == EventFormat::Csv) return parse_events_csv(data, width, height);
  return parse_events_binary(std::as_bytes(std::span(data.data(), data.size())), width, height);
}

void write_events(const std::filesystem::path& path, const EventStream& stream,
                  EventFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  if (format == EventFormat::Csv) {
    out << "t_us,x,y,p\n";
    for (const auto& e : stream.events) {
      out << e.t_us << ',' << e.x << ',' << e.y << ',' << int{e.p} << '\n';
    }
    return;
  }
  unsigned char rec[kBinaryRecordSize];
  for (const auto& e : stream.events) {
    for (int b = 0; b < 8; ++b) rec[b] = static_cast<unsigned char>(e.t_us >> (8 * b));
    rec[8] = static_cast<unsigned char>(e.x & 0xff);
    rec[9] = static_cast<unsigned char>(e.x >> 8);
    rec[10] = static_cast<unsigned char>(e.y & 0xff);
    rec[11] = static_cast<unsigned char>(e.y >> 8);
    rec[12] = static_cast<unsigned char>(e.p);
    out.write(reinterpret_cast<const char*>(rec), kBinaryRecordSize);
  }
}

std::vector<AccumFrame> accumulate(const EventStream& stream, std::int64_t window_us,
                                   AccumMode mode) {
  if (window_us <= 0) throw Error(ErrorCode::Validation, "window_us must be positive");
  std::vector<AccumFrame> frames;
  if (stream.events.empty()) return frames;

  const std::uint64_t t_first = stream.events.front().t_us;
  const std::uint64_t t_last = stream.events.back().t_us;
  const auto window = static_cast<std::uint64_t>(window_us);
  const std::uint64_t n_windows = (t_last - t_first) / window + 1;
  frames.reserve(n_windows);
  for (std::uint64_t k = 0; k < n_windows; ++k) {
    frames.emplace_back(stream.width, stream.height, t_first + k * window,
                        t_first + (k + 1) * window);
  }
  for (const auto& e : stream.events) {
    auto& frame = frames[(e.t_us - t_first) / window];
    frame.at(e.x, e.y) += mode == AccumMode::Count ? 1.0 : double(e.p);
  }
  if (mode == AccumMode::PolarityBalance) {
    for (auto& frame : frames) {
      for (double& v : frame.values) v = std::abs(v);
    }
  }
  return frames;
}

AccumFrame merge_frames(std::span<const AccumFrame> frames) {
  if (frames.empty()) return {};
  AccumFrame out(frames.front().width, frames.front().height, frames.front().t_start,
                 frames.back().t_end);
  for (const auto& f : frames) {
    if (f.width != out.width || f.height != out.height) {
      throw Error(ErrorCode::Validation, "cannot merge frames of different sizes");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += f.values[i];
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const AccumFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  const double peak = frame.values.empty()
                          ? 0.0
                          : *std::max_element(frame.values.begin(), frame.values.end());
  std::vector<unsigned char> pixels(frame.values.size(), 0);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      pixels[i] = static_cast<unsigned char>(std::lround(255.0 * frame.values[i] / peak));
    }
  }
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

void write_frame_csv(const std::filesystem::path& path, const AccumFrame& frame) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "width,height,t_start_us,t_end_us\n";
  out << frame.width << ',' << frame.height << ',' << frame.t_start << ',' << frame.t_end << '\n';
  char buf[32];
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, frame.at(x, y));
      if (x) out << ',';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

AccumFrame read_frame_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) {
      throw ParseError(line_no + 1, "frame CSV truncated at line " + std::to_string(line_no + 1));
    }
    ++line_no;
  };
  next();
  next();
  auto meta = split(trim(line), ',');
  AccumFrame frame;
  int w = 0;
  int h = 0;
  std::uint64_t t0 = 0;
  std::uint64_t t1 = 0;
  if (meta.size() != 4 || !parse_int(meta[0], w) || !parse_int(meta[1], h) ||
      !parse_int(meta[2], t0) || !parse_int(meta[3], t1) || w <= 0 || h <= 0) {
    throw ParseError(line_no, "frame CSV: bad metadata at line " + std::to_string(line_no));
  }
  frame = AccumFrame(w, h, t0, t1);
  for (int y = 0; y < h; ++y) {
    next();
    auto cells = split(trim(line), ',');
    if (cells.size() != static_cast<std::size_t>(w)) {
      throw ParseError(line_no, "frame CSV: expected " + std::to_string(w) + " values at line " +
                                    std::to_string(line_no));
    }
    for (int x = 0; x < w; ++x) {
      auto cell = trim(cells[x]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError(line_no, "frame CSV: bad value at line " + std::to_string(line_no));
      }
      frame.at(x, y) = v;
    }
  }
  return frame;
}

}  // namespace colcal
