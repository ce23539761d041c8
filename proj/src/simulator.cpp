#include "colcal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "colcal/error.hpp"

namespace colcal {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-9) return v / len;
  }
}

bool pairwise_distinct(const std::vector<Mat3>& rotations, const Mat3& candidate,
                       double min_angle) {
  for (const auto& r : rotations) {
    if (rotation_distance(r, candidate) < min_angle) return false;
  }
  return true;
}

}  // namespace

ParameterVector GroundTruth::parameters() const {
  ParameterVector p;
  p.mode = PoseMode::Spherical;
  p.intrinsics = intrinsics;
  p.distortion = distortion;
  p.offset = offset;
  for (const auto& r : rotations) p.rotations.push_back(axis_angle_from_rotation(r));
  return p;
}

void GroundTruth::validate(double margin_px) const {
  intrinsics.validate();
  target.validate();
  if (!(offset.r > 0.0)) throw Error(ErrorCode::Generation, "spherical radius must be positive");
  const ParameterVector theta = parameters();
  for (int v = 0; v < num_views(); ++v) {
    for (int j = 0; j < target.count(); ++j) {
      Vec2 p;
      try {
        p = project(theta, v, target.point(j));
      } catch (const Error&) {
        throw Error(ErrorCode::Generation,
                    "view " + std::to_string(v) + ": marker " + std::to_string(j) +
                        " lies behind the camera");
      }
      if (p.x() < margin_px || p.y() < margin_px || p.x() >= sensor_width - margin_px ||
          p.y() >= sensor_height - margin_px) {
        throw Error(ErrorCode::Generation, "view " + std::to_string(v) + ": marker " +
                                               std::to_string(j) + " projects outside the sensor");
      }
    }
  }
}

void NoiseModel::validate() const {
  if (!(centroid_sigma >= 0.0)) throw Error(ErrorCode::Validation, "sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw Error(ErrorCode::Validation, "outlier fraction must lie in [0, 1)");
  }
  if (!(background_rate >= 0.0)) {
    throw Error(ErrorCode::Validation, "background rate must be >= 0");
  }
  if (!(flicker_hz > 0.0)) throw Error(ErrorCode::Validation, "flicker frequency must be > 0");
  if (!(duty_cycle > 0.0 && duty_cycle < 1.0)) {
    throw Error(ErrorCode::Validation, "duty cycle must lie in (0, 1)");
  }
  if (!(marker_radius_px > 0.0)) throw Error(ErrorCode::Validation, "marker radius must be > 0");
  if (!(timestamp_jitter_us >= 0.0)) throw Error(ErrorCode::Validation, "jitter must be >= 0");
}

std::vector<std::vector<Vec2>> project_markers(const GroundTruth& gt) {
  const ParameterVector theta = gt.parameters();
  std::vector<std::vector<Vec2>> out(static_cast<std::size_t>(gt.num_views()));
  for (int v = 0; v < gt.num_views(); ++v) {
    for (int j = 0; j < gt.target.count(); ++j) {
      out[static_cast<std::size_t>(v)].push_back(project(theta, v, gt.target.point(j)));
    }
  }
  return out;
}

std::vector<Correspondence> simulate_views(const GroundTruth& gt, const NoiseModel& noise,
                                           std::uint64_t seed) {
  noise.validate();
  gt.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

  const auto projections = project_markers(gt);
  std::vector<Correspondence> out;
  const int n = gt.target.count();
  for (int v = 0; v < gt.num_views(); ++v) {
    std::vector<Correspondence> view(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      auto& c = view[static_cast<std::size_t>(j)];
      const Vec2& p = projections[static_cast<std::size_t>(v)][static_cast<std::size_t>(j)];
      c.image.u = p.x();
      c.image.v = p.y();
      if (noise.centroid_sigma > 0.0) {
        c.image.u += noise.centroid_sigma * jitter(rng);
        c.image.v += noise.centroid_sigma * jitter(rng);
      }
      c.image.mass = 1.0;
      c.image.area = 1;
      c.model = gt.target.point(j);
      c.model_index = j;
      c.view = v;
    }
    const auto n_out = static_cast<int>(std::lround(noise.outlier_fraction * n));
    if (n_out > 0) {
      std::vector<int> ids(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) ids[static_cast<std::size_t>(j)] = j;
      std::shuffle(ids.begin(), ids.end(), rng);
      for (int k = 0; k < n_out; ++k) {
        auto& c = view[static_cast<std::size_t>(ids[static_cast<std::size_t>(k)])];
        const double a = angle(rng);
        c.image.u += noise.outlier_displacement * std::cos(a);
        c.image.v += noise.outlier_displacement * std::sin(a);
      }
    }
    out.insert(out.end(), view.begin(), view.end());
  }
  return out;
}

std::vector<FlickerEdge> flicker_edges(const NoiseModel& noise, double duration_ms) {
  noise.validate();
  std::vector<FlickerEdge> edges;
  const double duration_us = duration_ms * 1000.0;
  if (!(duration_us > 0.0)) return edges;
  const double period = 1e6 / noise.flicker_hz;
  for (long k = 0;; ++k) {
    const double rise = noise.flicker_phase_us + static_cast<double>(k) * period;
    if (rise >= duration_us) break;
    edges.push_back({rise, 1});
    const double fall = rise + noise.duty_cycle * period;
    if (fall < duration_us) edges.push_back({fall, -1});
  }
  return edges;
}

double coverage_dither(std::size_t edge_index) {
  // Golden-ratio sequence: any run of consecutive edges samples [0, 1)
  // evenly, so partial pixels fire in proportion to their coverage.
  const double g = 0.6180339887498949;
  const double x = 0.5 + static_cast<double>(edge_index) * g;
  return x - std::floor(x);
}

std::vector<CoveredPixel> render_disk(const Vec2& center, double radius, int width, int height) {
  std::vector<CoveredPixel> out;
  constexpr int kSub = 16;
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x() - radius - 1.0)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(center.x() + radius + 1.0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y() - radius - 1.0)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(center.y() + radius + 1.0)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      // Pixel (x, y) covers [x - 0.5, x + 0.5] x [y - 0.5, y + 0.5].
      const double dx = std::abs(x - center.x());
      const double dy = std::abs(y - center.y());
      const double far = std::hypot(dx + 0.5, dy + 0.5);
      const double near = std::hypot(std::max(0.0, dx - 0.5), std::max(0.0, dy - 0.5));
      if (near >= radius) continue;
      double coverage = 1.0;
      if (far > radius) {
        int inside = 0;
        for (int sy = 0; sy < kSub; ++sy) {
          const double py = y - 0.5 + (sy + 0.5) / kSub - center.y();
          for (int sx = 0; sx < kSub; ++sx) {
            const double px = x - 0.5 + (sx + 0.5) / kSub - center.x();
            if (px * px + py * py <= r2) ++inside;
          }
        }
        coverage = static_cast<double>(inside) / (kSub * kSub);
      }
      if (coverage > 0.0) out.push_back({x, y, coverage});
    }
  }
  return out;
}

EventStream simulate_events(const GroundTruth& gt, int view, const NoiseModel& noise,
                            double duration_ms, std::uint64_t seed) {
  noise.validate();
  if (view < 0 || view >= gt.num_views()) {
    throw Error(ErrorCode::Validation, "view index out of range");
  }
  if (duration_ms < 0.0) throw Error(ErrorCode::Validation, "duration must be >= 0");
  gt.validate();

  EventStream stream;
  stream.width = gt.sensor_width;
  stream.height = gt.sensor_height;
  if (duration_ms == 0.0) return stream;

  const auto centers = project_markers(gt)[static_cast<std::size_t>(view)];
  const double radius = noise.marker_radius_px;
  for (std::size_t a = 0; a < centers.size(); ++a) {
    const Vec2& c = centers[a];
    if (c.x() - radius < 0.0 || c.y() - radius < 0.0 || c.x() + radius >= gt.sensor_width ||
        c.y() + radius >= gt.sensor_height) {
      throw Error(ErrorCode::Generation, "view " + std::to_string(view) + ": marker " +
                                             std::to_string(a) + " disk leaves the sensor");
    }
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      // Disks must be separated by at least one empty pixel ring.
      if ((c - centers[b]).norm() <= 2.0 * radius + 2.0) {
        throw Error(ErrorCode::Generation, "view " + std::to_string(view) + ": marker disks " +
                                               std::to_string(a) + " and " + std::to_string(b) +
                                               " overlap");
      }
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, noise.timestamp_jitter_us);
  const double duration_us = duration_ms * 1000.0;
  auto stamp = [&](double t) {
    if (noise.timestamp_jitter_us > 0.0) t += jitter(rng);
    t = std::clamp(t, 0.0, duration_us - 1.0);
    return static_cast<std::uint64_t>(std::llround(t));
  };

  const auto edges = flicker_edges(noise, duration_ms);
  for (const auto& c : centers) {
    for (const auto& px : render_disk(c, radius, gt.sensor_width, gt.sensor_height)) {
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (!(px.coverage > coverage_dither(e))) continue;
        stream.events.push_back({stamp(edges[e].t_us), static_cast<std::uint16_t>(px.x),
                                 static_cast<std::uint16_t>(px.y), edges[e].polarity});
      }
    }
  }

  if (noise.background_rate > 0.0) {
    const double mean = noise.background_rate * gt.sensor_width * gt.sensor_height *
                        duration_ms * 1e-3;
    std::poisson_distribution<long> count(mean);
    std::uniform_int_distribution<int> ux(0, gt.sensor_width - 1);
    std::uniform_int_distribution<int> uy(0, gt.sensor_height - 1);
    std::uniform_real_distribution<double> ut(0.0, duration_us);
    std::bernoulli_distribution pol(0.5);
    const long n = count(rng);
    for (long i = 0; i < n; ++i) {
      Event e;
      e.x = static_cast<std::uint16_t>(ux(rng));
      e.y = static_cast<std::uint16_t>(uy(rng));
      e.t_us = static_cast<std::uint64_t>(std::floor(ut(rng)));
      e.p = pol(rng) ? 1 : -1;
      stream.events.push_back(e);
    }
  }
  sort_events(stream);
  return stream;
}

std::vector<Mat3> random_spherical_poses(int n, double max_angle_deg, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorCode::Validation, "need at least 2 poses");
  if (!(max_angle_deg > 5.0 && max_angle_deg < 90.0)) {
    throw Error(ErrorCode::Validation, "max angle must lie in (5, 90) degrees");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(5.0 * kDeg, max_angle_deg * kDeg);
  std::vector<Mat3> out;
  int resamples = 0;
  while (static_cast<int>(out.size()) < n) {
    // uniform_real_distribution samples [a, b); flip it onto (a, b].
    const double a = 5.0 * kDeg + max_angle_deg * kDeg - angle(rng);
    const Mat3 r = rotation_from_axis_angle(random_unit_vector(rng) * a);
    if (pairwise_distinct(out, r, 2.0 * kDeg)) {
      out.push_back(r);
    } else if (++resamples > 1000) {
      throw Error(ErrorCode::Sampling, "could not draw pairwise-distinct rotations");
    }
  }
  return out;
}

Mat3 look_at_target(const SphericalOffset& offset, const TargetGeometry& target) {
  const Vec3 center((target.cols - 1) * target.spacing / 2.0,
                    (target.rows - 1) * target.spacing / 2.0, 0.0);
  const Vec3 z = (center - offset.center()).normalized();
  const Vec3 x = (Vec3::UnitX() - z * z.x()).normalized();
  const Vec3 y = z.cross(x);
  Mat3 camera;
  camera.row(0) = x.transpose();
  camera.row(1) = y.transpose();
  camera.row(2) = z.transpose();
  return camera.transpose();  // R_ep is the camera-to-target rotation
}

std::vector<Mat3> sample_visible_rotations(const GroundTruth& base, int n, std::uint64_t seed,
                                           const ViewSampling& sampling) {
  if (n < 1) throw Error(ErrorCode::Validation, "need at least one view");
  const Mat3 look = look_at_target(base.offset, base.target);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  GroundTruth probe = base;
  std::vector<Mat3> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > 1000 * n) {
      throw Error(ErrorCode::Sampling, "could not sample visible, distinct views");
    }
    const double yaw = sampling.max_yaw_deg * kDeg * unit(rng);
    const double pitch = sampling.max_pitch_deg * kDeg * unit(rng);
    const double roll = sampling.max_roll_deg * kDeg * unit(rng);
    // Perturbation in the camera frame: R_cam' = P R_cam, R_ep' = R_ep P^T.
    const Mat3 p = (Eigen::AngleAxisd(roll, Vec3::UnitZ()) *
                    Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
                    Eigen::AngleAxisd(yaw, Vec3::UnitY()))
                       .toRotationMatrix();
    const Mat3 r = look * p.transpose();
    if (!pairwise_distinct(out, r, 2.0 * kDeg)) continue;
    probe.rotations = {r};
    try {
      probe.validate(sampling.margin_px);
    } catch (const Error&) {
      continue;
    }
    out.push_back(r);
  }
  return out;
}

GroundTruth default_ground_truth(int n_views, std::uint64_t seed) {
  GroundTruth gt;
  gt.intrinsics = {3345.06, 3345.27, 642.10, 363.32};
  gt.distortion = {0.06, -0.90};
  gt.target = {7, 7, 25.0};
  gt.sensor_width = 1280;
  gt.sensor_height = 720;
  // Camera centre displaced ~39 deg and ~32 deg off the target normal.
  gt.offset = {635.0, 505.0, 700.0};
  gt.rotations = sample_visible_rotations(gt, n_views, seed);
  return gt;
}

}  // namespace colcal
