#pragma once

#include <cstdint>
#include <vector>

#include "colcal/collimator_init.hpp"
#include "colcal/event_io.hpp"
#include "colcal/features.hpp"
#include "colcal/refine.hpp"

namespace colcal {

/// Complete forward model of a collimator capture: one camera centre shared
/// by every view, a per-view rotation R_ep, and the marker grid.
struct GroundTruth {
  Intrinsics intrinsics;
  Distortion distortion;
  SphericalOffset offset;
  std::vector<Mat3> rotations;  // R_ep per view
  TargetGeometry target;
  int sensor_width = 1280;
  int sensor_height = 720;

  int num_views() const { return static_cast<int>(rotations.size()); }
  ParameterVector parameters() const;

  /// Throws Generation naming the first view with a marker behind the camera
  /// or outside the sensor (shrunk by margin_px on every side).
  void validate(double margin_px = 0.0) const;
};

struct NoiseModel {
  double centroid_sigma = 0.0;        // px, Gaussian jitter on each axis
  double outlier_fraction = 0.0;      // share of points per view replaced by outliers
  double outlier_displacement = 0.0;  // px, distance of an outlier from its true position
  double background_rate = 0.0;       // events / s / px
  double flicker_hz = 60.0;
  double duty_cycle = 0.5;
  double flicker_phase_us = 1000.0;  // time of the first rising edge
  double timestamp_jitter_us = 20.0;
  double marker_radius_px = 4.0;

  void validate() const;
};

/// Noise-free projections of every marker of every view.
std::vector<std::vector<Vec2>> project_markers(const GroundTruth& gt);

/// Correspondences for every view: exact projections, Gaussian jitter, then
/// outlier substitution. Deterministic for a fixed seed.
std::vector<Correspondence> simulate_views(const GroundTruth& gt, const NoiseModel& noise,
                                           std::uint64_t seed);

/// Flicker schedule: time of every edge in [0, duration) and its polarity.
struct FlickerEdge {
  double t_us = 0.0;
  std::int8_t polarity = 1;
};
std::vector<FlickerEdge> flicker_edges(const NoiseModel& noise, double duration_ms);

/// Threshold that a pixel's disk coverage must exceed to fire at edge k.
/// Interior pixels (coverage 1) fire at every edge.
double coverage_dither(std::size_t edge_index);

/// Pixels touched by a marker disk with their covered area fraction.
struct CoveredPixel {
  int x = 0;
  int y = 0;
  double coverage = 0.0;
};
std::vector<CoveredPixel> render_disk(const Vec2& center, double radius, int width, int height);

/// Event stream of one view: every covered pixel emits at each flicker edge
/// (subject to its coverage), plus Poisson background events.
EventStream simulate_events(const GroundTruth& gt, int view, const NoiseModel& noise,
                            double duration_ms, std::uint64_t seed);

/// n rotations with angle uniform in (5 deg, max_angle] about uniform axes,
/// pairwise at least 2 degrees apart.
std::vector<Mat3> random_spherical_poses(int n, double max_angle_deg, std::uint64_t seed);

/// Rotation that points the optical axis from the camera centre at the
/// target centre, keeping the target X axis along image u.
Mat3 look_at_target(const SphericalOffset& offset, const TargetGeometry& target);

struct ViewSampling {
  double max_yaw_deg = 6.0;
  double max_pitch_deg = 3.0;
  double max_roll_deg = 20.0;
  double margin_px = 8.0;
};

/// Perturbations of look_at_target that keep every marker on the sensor.
std::vector<Mat3> sample_visible_rotations(const GroundTruth& base, int n, std::uint64_t seed,
                                           const ViewSampling& sampling = {});

/// Collimator-like default: 1280x720 sensor, fx ~ fy ~ 3345 px, 7x7 grid
/// seen obliquely from a fixed centre, n views.
GroundTruth default_ground_truth(int n_views, std::uint64_t seed);

}  // namespace colcal
