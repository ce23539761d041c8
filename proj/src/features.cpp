#include "colcal/features.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "colcal/error.hpp"
#include "colcal/homography.hpp"

namespace colcal {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

// Dominant grid direction folded into (-45, 45] degrees. Each marker votes
// with the vectors to its four nearest neighbours; angles are multiplied by
// four so that the two perpendicular grid axes reinforce each other.
double dominant_direction(std::span<const MarkerPoint> markers) {
  double c = 0.0;
  double s = 0.0;
  const std::size_t k = std::min<std::size_t>(4, markers.size() - 1);
  std::vector<std::pair<double, std::size_t>> dist(markers.size());
  for (std::size_t i = 0; i < markers.size(); ++i) {
    for (std::size_t j = 0; j < markers.size(); ++j) {
      const double du = markers[j].u - markers[i].u;
      const double dv = markers[j].v - markers[i].v;
      dist[j] = {i == j ? std::numeric_limits<double>::infinity() : du * du + dv * dv, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t n = 0; n < k; ++n) {
      const auto& m = markers[dist[n].second];
      const double angle = std::atan2(m.v - markers[i].v, m.u - markers[i].u);
      // Nearer neighbours weigh more; diagonal neighbours fold onto 45 deg
      // offsets and are suppressed by the 1/d^2 weight.
      const double w = 1.0 / dist[n].first;
      c += w * std::cos(4.0 * angle);
      s += w * std::sin(4.0 * angle);
    }
  }
  return std::atan2(s, c) / 4.0;
}

}  // namespace

std::vector<Vec3> TargetGeometry::points() const {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(count()));
  for (int i = 0; i < count(); ++i) out.push_back(point(i));
  return out;
}

void TargetGeometry::validate() const {
  if (rows < 2 || cols < 2) {
    throw Error(ErrorCode::Validation, "target grid needs at least 2 rows and 2 columns");
  }
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw Error(ErrorCode::Validation, "target spacing must be positive");
  }
}

double otsu_threshold(const AccumFrame& frame) {
  std::vector<double> vals;
  for (double v : frame.values) {
    if (v > 0.0) vals.push_back(v);
  }
  if (vals.empty()) return 0.0;
  std::sort(vals.begin(), vals.end());

  const double n = static_cast<double>(vals.size());
  const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
  double best_score = -1.0;
  double best = std::nextafter(vals.front(), 0.0);
  double w0 = 0.0;
  double sum0 = 0.0;
  // Exact Otsu over the distinct values: candidate cuts lie between them.
  for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
    w0 += 1.0;
    sum0 += vals[i];
    if (vals[i + 1] == vals[i]) continue;
    const double w1 = n - w0;
    const double mu0 = sum0 / w0;
    const double mu1 = (total - sum0) / w1;
    const double score = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (score > best_score) {
      best_score = score;
      best = 0.5 * (vals[i] + vals[i + 1]);
    }
  }
  return best;
}

std::vector<MarkerPoint> detect_markers(const AccumFrame& frame, const DetectionParams& params) {
  std::vector<MarkerPoint> out;
  if (frame.width <= 0 || frame.height <= 0) {
    throw Error(ErrorCode::Validation, "detect_markers: empty frame");
  }
  const double threshold = params.threshold > 0.0 ? params.threshold : otsu_threshold(frame);
  const int max_area = params.max_area > 0
                           ? params.max_area
                           : std::max(1, static_cast<int>(0.01 * frame.width * frame.height));

  const int w = frame.width;
  const int h = frame.height;
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(w) * h, 0);
  std::vector<int> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const auto idx0 = static_cast<std::size_t>(y0) * w + x0;
      if (visited[idx0] || !(frame.values[idx0] > threshold)) continue;

      double mass = 0.0;
      double su = 0.0;
      double sv = 0.0;
      int area = 0;
      visited[idx0] = 1;
      stack.assign(1, static_cast<int>(idx0));
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int x = idx % w;
        const int y = idx / w;
        const double val = frame.values[static_cast<std::size_t>(idx)];
        mass += val;
        su += val * x;
        sv += val * y;
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx;
            const int ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto nidx = static_cast<std::size_t>(ny) * w + nx;
            if (visited[nidx] || !(frame.values[nidx] > threshold)) continue;
            visited[nidx] = 1;
            stack.push_back(static_cast<int>(nidx));
          }
        }
      }
      if (area < params.min_area || area > max_area || !(mass > 0.0)) continue;
      out.push_back({su / mass, sv / mass, mass, area});
    }
  }
  return out;
}

std::vector<Correspondence> order_grid(std::span<const MarkerPoint> markers,
                                       const TargetGeometry& geometry, int view) {
  geometry.validate();
  const auto expected = static_cast<std::size_t>(geometry.count());
  if (markers.size() != expected) {
    const auto got = static_cast<long>(markers.size());
    throw Error(ErrorCode::Correspondence,
                "view " + std::to_string(view) + ": expected " + std::to_string(expected) +
                    " markers for a " + std::to_string(geometry.rows) + "x" +
                    std::to_string(geometry.cols) + " grid, got " + std::to_string(got) +
                    " (deficit " + std::to_string(static_cast<long>(expected) - got) + ")");
  }

  const double phi = dominant_direction(markers);
  if (std::abs(phi) > 44.0 * std::numbers::pi / 180.0) {
    throw Error(ErrorCode::Ambiguity, "view " + std::to_string(view) +
                                          ": grid rotated by ~45 degrees, rows are ambiguous");
  }
  const Vec2 major(std::cos(phi), std::sin(phi));
  const Vec2 minor(-std::sin(phi), std::cos(phi));

  // Marker positions in the grid-aligned frame.
  std::vector<Vec2> aligned;
  aligned.reserve(markers.size());
  for (const auto& m : markers) {
    const Vec2 p(m.u, m.v);
    aligned.emplace_back(major.dot(p), minor.dot(p));
  }

  // Outer corners, then a projective rectification so that perspective
  // convergence of the rows does not break the clustering below.
  auto pick = [&](auto score) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < aligned.size(); ++i) {
      if (score(aligned[i]) > score(aligned[best])) best = i;
    }
    return best;
  };
  const std::size_t tl = pick([](const Vec2& p) { return -p.x() - p.y(); });
  const std::size_t tr = pick([](const Vec2& p) { return p.x() - p.y(); });
  const std::size_t bl = pick([](const Vec2& p) { return p.y() - p.x(); });
  const std::size_t br = pick([](const Vec2& p) { return p.x() + p.y(); });
  if (std::set<std::size_t>{tl, tr, bl, br}.size() != 4) {
    throw Error(ErrorCode::Ambiguity,
                "view " + std::to_string(view) + ": grid corners are not distinct");
  }
  const double c1 = geometry.cols - 1;
  const double r1 = geometry.rows - 1;
  const std::array<Vec2, 4> grid_corners{Vec2(0, 0), Vec2(c1, 0), Vec2(0, r1), Vec2(c1, r1)};
  const std::array<Vec2, 4> image_corners{aligned[tl], aligned[tr], aligned[bl], aligned[br]};
  Homography to_grid;
  try {
    to_grid = estimate_homography(image_corners, grid_corners);
  } catch (const Error&) {
    throw Error(ErrorCode::Ambiguity,
                "view " + std::to_string(view) + ": grid corners are degenerate");
  }

  std::vector<Vec2> rectified;
  rectified.reserve(aligned.size());
  for (const auto& p : aligned) rectified.push_back(apply_homography(to_grid, p));

  std::vector<std::size_t> order(markers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rectified[a].y() < rectified[b].y();
  });

  // Split into rows at the (rows - 1) largest gaps along the minor axis.
  std::vector<std::pair<double, std::size_t>> gaps;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    gaps.emplace_back(rectified[order[i + 1]].y() - rectified[order[i]].y(), i + 1);
  }
  std::sort(gaps.begin(), gaps.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<std::size_t> cuts{0};
  for (int i = 0; i < geometry.rows - 1; ++i) {
    cuts.push_back(gaps[static_cast<std::size_t>(i)].second);
  }
  cuts.push_back(order.size());
  std::sort(cuts.begin(), cuts.end());

  std::vector<Correspondence> out(markers.size());
  for (int row = 0; row < geometry.rows; ++row) {
    const std::size_t begin = cuts[static_cast<std::size_t>(row)];
    const std::size_t end = cuts[static_cast<std::size_t>(row) + 1];
    if (end - begin != static_cast<std::size_t>(geometry.cols)) {
      throw Error(ErrorCode::Ambiguity, "view " + std::to_string(view) + ": row " +
                                            std::to_string(row) + " has " +
                                            std::to_string(end - begin) + " markers, expected " +
                                            std::to_string(geometry.cols));
    }
    std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return rectified[a].x() < rectified[b].x();
    });
    for (int col = 0; col < geometry.cols; ++col) {
      const int model_ix = row * geometry.cols + col;
      auto& c = out[static_cast<std::size_t>(model_ix)];
      c.image = markers[members[static_cast<std::size_t>(col)]];
      c.model = geometry.point(model_ix);
      c.model_index = model_ix;
      c.view = view;
    }
  }
  return out;
}

void write_markers_csv(const std::filesystem::path& path,
                       std::span<const std::vector<MarkerPoint>> markers_per_view) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "view,u,v,mass,area\n";
  for (std::size_t view = 0; view < markers_per_view.size(); ++view) {
    for (const auto& m : markers_per_view[view]) {
      out << view << ',' << fmt(m.u) << ',' << fmt(m.v) << ',' << fmt(m.mass) << ',' << m.area
          << '\n';
    }
  }
}

void write_correspondences_csv(const std::filesystem::path& path,
                               std::span<const Correspondence> pairs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "view,model_ix,u,v,X,Y\n";
  for (const auto& c : pairs) {
    out << c.view << ',' << c.model_index << ',' << fmt(c.image.u) << ',' << fmt(c.image.v)
        << ',' << fmt(c.model.x()) << ',' << fmt(c.model.y()) << '\n';
  }
}

std::vector<Correspondence> read_correspondences_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<Correspondence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("view", 0) == 0) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const char* b = cell.data();
      const char* e = cell.data() + cell.size();
      while (b < e && *b == ' ') ++b;
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e) {
        throw ParseError(line_no, "correspondence CSV line " + std::to_string(line_no) +
                                      ": bad number '" + cell + "'");
      }
      vals.push_back(v);
    }
    if (vals.size() != 6) {
      throw ParseError(line_no, "correspondence CSV line " + std::to_string(line_no) +
                                    ": expected 6 fields view,model_ix,u,v,X,Y");
    }
    if (vals[0] < 0 || vals[0] != std::floor(vals[0]) || vals[1] < 0 ||
        vals[1] != std::floor(vals[1])) {
      throw ParseError(line_no, "correspondence CSV line " + std::to_string(line_no) +
                                    ": view and model_ix must be non-negative integers");
    }
    Correspondence c;
    c.view = static_cast<int>(vals[0]);
    c.model_index = static_cast<int>(vals[1]);
    c.image.u = vals[2];
    c.image.v = vals[3];
    c.image.mass = 1.0;
    c.image.area = 1;
    c.model = Vec3(vals[4], vals[5], 0.0);
    out.push_back(c);
  }
  return out;
}

int count_views(std::span<const Correspondence> pairs) {
  std::set<int> views;
  for (const auto& c : pairs) views.insert(c.view);
  int expected = 0;
  for (int v : views) {
    if (v != expected++) {
      throw Error(ErrorCode::Validation, "views must be numbered consecutively from 0");
    }
  }
  return static_cast<int>(views.size());
}

}  // namespace colcal
