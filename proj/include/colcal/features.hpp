#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "colcal/event_io.hpp"
#include "colcal/geometry.hpp"

namespace colcal {

/// A detected blob: intensity-weighted centroid in pixels plus its support.
struct MarkerPoint {
  double u = 0.0;
  double v = 0.0;
  double mass = 0.0;
  int area = 0;
};

/// Planar grid of markers on the Z = 0 plane, row-major, origin at the
/// first marker. The 7x7 / 25-unit defaults are arbitrary placeholders.
struct TargetGeometry {
  int rows = 7;
  int cols = 7;
  double spacing = 25.0;

  int count() const { return rows * cols; }
  Vec3 point(int index) const {
    return {(index % cols) * spacing, (index / cols) * spacing, 0.0};
  }
  std::vector<Vec3> points() const;
  void validate() const;
};

struct Correspondence {
  MarkerPoint image;
  Vec3 model = Vec3::Zero();
  int model_index = 0;
  int view = 0;
};

struct DetectionParams {
  // <= 0 selects Otsu's threshold over the nonzero pixels.
  double threshold = 0.0;
  int min_area = 5;
  // <= 0 selects 1% of the frame's pixel count.
  int max_area = 0;
};

/// Otsu threshold over the nonzero values of the frame. Pixels strictly
/// above the returned value are foreground.
double otsu_threshold(const AccumFrame& frame);

/// Global threshold, 8-connected labeling, intensity-weighted centroids.
/// Markers are returned in raster order of their first pixel.
std::vector<MarkerPoint> detect_markers(const AccumFrame& frame,
                                        const DetectionParams& params = {});

/// Assigns detected markers to model points in row-major order. The grid's
/// in-plane rotation must stay below 45 degrees.
std::vector<Correspondence> order_grid(std::span<const MarkerPoint> markers,
                                       const TargetGeometry& geometry, int view = 0);

void write_markers_csv(const std::filesystem::path& path,
                       std::span<const std::vector<MarkerPoint>> markers_per_view);

void write_correspondences_csv(const std::filesystem::path& path,
                               std::span<const Correspondence> pairs);

/// Reads `view,model_ix,u,v,X,Y`. Model points get Z = 0.
std::vector<Correspondence> read_correspondences_csv(const std::filesystem::path& path);

/// Number of distinct views and a check that they are numbered 0..n-1.
int count_views(std::span<const Correspondence> pairs);

}  // namespace colcal
