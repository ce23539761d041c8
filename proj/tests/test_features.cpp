#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "colcal/error.hpp"
#include "colcal/features.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace colcal;

namespace {

// Truncated Gaussian blob added to a frame.
void add_blob(AccumFrame& f, double cx, double cy, double sigma, double radius, double peak) {
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      if (d2 <= radius * radius) f.at(x, y) += peak * std::exp(-d2 / (2 * sigma * sigma));
    }
  }
}

std::vector<MarkerPoint> grid_markers(int rows, int cols, double spacing, double angle,
                                      Vec2 origin) {
  std::vector<MarkerPoint> out;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) {
      const double x = k * spacing, y = r * spacing;
      out.push_back({origin.x() + c * x - s * y, origin.y() + s * x + c * y, 1.0, 9});
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("an all-zero frame has no markers") {
  AccumFrame f(32, 32, 0, 1);
  CHECK(detect_markers(f).empty());
  CHECK(otsu_threshold(f) == 0.0);
}

TEST_CASE("otsu splits a bimodal histogram between its modes") {
  AccumFrame f(10, 10, 0, 1);
  for (int i = 0; i < 40; ++i) f.values[static_cast<std::size_t>(i)] = 1.0 + (i % 2);
  for (int i = 40; i < 60; ++i) f.values[static_cast<std::size_t>(i)] = 9.0 + (i % 2);
  const double t = otsu_threshold(f);
  CHECK(t > 2.0);
  CHECK(t < 9.0);
}

TEST_CASE("gaussian disk centroid matches the brute-force centroid") {
  AccumFrame f(320, 260, 0, 1);
  add_blob(f, 100.5, 200.25, 1.5, 6.0, 10.0);
  const auto markers = detect_markers(f);
  REQUIRE(markers.size() == 1);
  const Vec2 brute = oracle::centroid(f, 0, 0, f.width, f.height);
  CHECK(std::abs(markers[0].u - 100.5) < 0.1);
  CHECK(std::abs(markers[0].v - 200.25) < 0.1);
  CHECK(std::abs(brute.x() - 100.5) < 0.1);
  CHECK(std::abs(brute.y() - 200.25) < 0.1);
}

TEST_CASE("two separated disks give two centroids") {
  AccumFrame f(300, 200, 0, 1);
  add_blob(f, 60.3, 50.7, 1.5, 6.0, 10.0);
  add_blob(f, 220.0, 140.5, 1.5, 6.0, 8.0);
  auto markers = detect_markers(f);
  REQUIRE(markers.size() == 2);
  std::sort(markers.begin(), markers.end(),
            [](const MarkerPoint& a, const MarkerPoint& b) { return a.u < b.u; });
  const Vec2 a = oracle::centroid(f, 0, 0, 150, 200);
  const Vec2 b = oracle::centroid(f, 150, 0, 300, 200);
  CHECK(std::abs(markers[0].u - 60.3) < 0.1);
  CHECK(std::abs(markers[0].v - 50.7) < 0.1);
  CHECK(std::abs(markers[1].u - 220.0) < 0.1);
  CHECK(std::abs(markers[1].v - 140.5) < 0.1);
  CHECK(std::abs(markers[0].u - a.x()) < 0.1);
  CHECK(std::abs(markers[1].v - b.y()) < 0.1);
}

TEST_CASE("symmetric blob centroid is its centre") {
  AccumFrame f(64, 64, 0, 1);
  add_blob(f, 30.0, 20.0, 2.0, 5.0, 7.0);
  add_blob(f, 40.5, 45.5, 2.0, 5.0, 7.0);
  auto m = detect_markers(f);
  REQUIRE(m.size() == 2);
  CHECK(std::abs(m[0].u - 30.0) < 1e-6);
  CHECK(std::abs(m[0].v - 20.0) < 1e-6);
  CHECK(std::abs(m[1].u - 40.5) < 1e-6);
  CHECK(std::abs(m[1].v - 45.5) < 1e-6);
}

TEST_CASE("detection is translation-equivariant") {
  AccumFrame f(120, 100, 0, 1);
  add_blob(f, 30.3, 40.8, 1.7, 5.0, 9.0);
  add_blob(f, 70.1, 20.6, 1.2, 4.0, 6.0);
  AccumFrame g(120, 100, 0, 1);
  const int dx = 13, dy = -7;
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const int nx = x + dx, ny = y + dy;
      if (nx >= 0 && ny >= 0 && nx < g.width && ny < g.height) g.at(nx, ny) = f.at(x, y);
    }
  }
  const auto a = detect_markers(f);
  const auto b = detect_markers(g);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(b[i].u - a[i].u == doctest::Approx(dx).epsilon(1e-12));
    CHECK(b[i].v - a[i].v == doctest::Approx(dy).epsilon(1e-12));
  }
}

TEST_CASE("area bounds reject hot pixels and floods") {
  AccumFrame f(100, 100, 0, 1);
  f.at(5, 5) = 50.0;                      // single hot pixel
  add_blob(f, 50.0, 50.0, 2.0, 4.0, 10.0);  // genuine marker
  DetectionParams fixed;
  fixed.threshold = 0.5;
  auto m = detect_markers(f, fixed);
  REQUIRE(m.size() == 1);
  CHECK(m[0].u == doctest::Approx(50.0));
  DetectionParams tight = fixed;
  tight.max_area = 10;
  CHECK(detect_markers(f, tight).empty());
}

TEST_CASE("axis-aligned grid is ordered row-major") {
  const TargetGeometry g{3, 3, 10.0};
  auto markers = grid_markers(3, 3, 20.0, 0.0, Vec2(50, 60));
  std::vector<MarkerPoint> shuffled = markers;
  std::mt19937 rng(4);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto pairs = order_grid(shuffled, g, 2);
  REQUIRE(pairs.size() == 9);
  for (int i = 0; i < 9; ++i) {
    CHECK(pairs[static_cast<std::size_t>(i)].image.u == markers[static_cast<std::size_t>(i)].u);
    CHECK(pairs[static_cast<std::size_t>(i)].image.v == markers[static_cast<std::size_t>(i)].v);
    CHECK(pairs[static_cast<std::size_t>(i)].model == g.point(i));
    CHECK(pairs[static_cast<std::size_t>(i)].view == 2);
  }
}

TEST_CASE("in-plane rotations below 45 degrees keep the assignment") {
  const TargetGeometry g{3, 4, 1.0};
  for (double deg : {-40.0, -30.0, -10.0, 5.0, 30.0, 40.0}) {
    const double a = deg * std::numbers::pi / 180.0;
    const auto markers = grid_markers(3, 4, 30.0, a, Vec2(200, 150));
    std::vector<MarkerPoint> shuffled(markers.rbegin(), markers.rend());
    const auto pairs = order_grid(shuffled, g);
    for (int i = 0; i < g.count(); ++i) {
      CHECK(pairs[static_cast<std::size_t>(i)].image.u == markers[static_cast<std::size_t>(i)].u);
      CHECK(pairs[static_cast<std::size_t>(i)].image.v == markers[static_cast<std::size_t>(i)].v);
    }
  }
}

TEST_CASE("perspective-distorted grid is ordered") {
  const TargetGeometry g{7, 7, 25.0};
  Eigen::Matrix3d h;
  h << 2.1, 0.4, 300, -0.3, 1.9, 200, 0.0009, 0.0006, 1;
  std::vector<MarkerPoint> markers;
  for (int i = 0; i < g.count(); ++i) {
    const Vec2 p = oracle::apply(h, Vec2(g.point(i).x(), g.point(i).y()));
    markers.push_back({p.x(), p.y(), 1.0, 9});
  }
  std::vector<MarkerPoint> shuffled = markers;
  std::mt19937 rng(11);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto pairs = order_grid(shuffled, g);
  for (int i = 0; i < g.count(); ++i) {
    CHECK(pairs[static_cast<std::size_t>(i)].image.u == markers[static_cast<std::size_t>(i)].u);
  }
}

TEST_CASE("ordering errors") {
  const TargetGeometry g{3, 3, 1.0};
  auto markers = grid_markers(3, 3, 20.0, 0.0, Vec2(50, 50));
  markers.pop_back();
  try {
    order_grid(markers, g);
    FAIL("expected a correspondence error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Correspondence);
    CHECK(std::string(e.what()).find("deficit 1") != std::string::npos);
  }
  const auto diagonal = grid_markers(3, 3, 20.0, std::numbers::pi / 4, Vec2(100, 50));
  try {
    order_grid(diagonal, g);
    FAIL("expected an ambiguity error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Ambiguity);
  }
  std::vector<MarkerPoint> uneven;
  for (int k = 0; k < 4; ++k) uneven.push_back({10.0 + 20 * k, 10.0, 1, 9});
  for (int k = 0; k < 4; ++k) uneven.push_back({10.0 + 20 * k, 30.0, 1, 9});
  uneven.push_back({40.0, 50.0, 1, 9});
  try {
    order_grid(uneven, g);
    FAIL("expected an ambiguity error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Ambiguity);
  }
}

TEST_CASE("correspondence csv round trip") {
  const auto dir = support::scratch("features_csv");
  const TargetGeometry g{2, 3, 12.5};
  std::vector<Correspondence> pairs;
  for (int v = 0; v < 2; ++v) {
    for (int i = 0; i < g.count(); ++i) {
      pairs.push_back({{100.125 + i + v * 0.1, 200.0 / 3.0 + i, 1.0, 1}, g.point(i), i, v});
    }
  }
  write_correspondences_csv(dir / "c.csv", pairs);
  const auto back = read_correspondences_csv(dir / "c.csv");
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(back[i].image.u == pairs[i].image.u);
    CHECK(back[i].image.v == pairs[i].image.v);
    CHECK(back[i].model == pairs[i].model);
    CHECK(back[i].view == pairs[i].view);
    CHECK(back[i].model_index == pairs[i].model_index);
  }
  CHECK(count_views(back) == 2);
  support::spit(dir / "bad.csv", "view,model_ix,u,v,X,Y\n0,0,1,2,3,4\n0,1,1,2,3\n");
  try {
    read_correspondences_csv(dir / "bad.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::vector<std::vector<MarkerPoint>> m = {{{1.5, 2.5, 3, 4}}};
  write_markers_csv(dir / "m.csv", m);
  CHECK(support::slurp(dir / "m.csv") == "view,u,v,mass,area\n0,1.5,2.5,3,4\n");
}

}  // TEST_SUITE
