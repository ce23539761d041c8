#pragma once
// Reference computations written independently of the library code paths
// they check. Only plain Eigen arithmetic is used here.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "colcal/event_io.hpp"
#include "colcal/refine.hpp"

namespace oracle {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

inline Matrix3d camera_matrix(double fx, double fy, double cx, double cy) {
  Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

// Uniform random rotation from a normalized Gaussian quaternion.
inline Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// Rotation of a given angle about a uniformly random axis.
inline Matrix3d random_rotation_with_angle(std::mt19937_64& rng, double angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector3d axis(n(rng), n(rng), n(rng));
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// Plane-to-image homography of a camera X_c = R X + t: K [r1 r2 t].
inline Matrix3d plane_homography(const Matrix3d& k, const Matrix3d& r, const Vector3d& t) {
  Matrix3d m;
  m.col(0) = r.col(0);
  m.col(1) = r.col(1);
  m.col(2) = t;
  return k * m;
}

// Collimator geometry: the camera centre sits at (x, y, -r) in target
// coordinates and R_ep rotates camera axes into target axes.
inline Matrix3d spherical_homography(const Matrix3d& k, const Matrix3d& r_ep, double x, double y,
                                     double r) {
  const Matrix3d r_cam = r_ep.transpose();
  const Vector3d t = -r_cam * Vector3d(x, y, -r);
  return plane_homography(k, r_cam, t);
}

inline Vector2d apply(const Matrix3d& h, const Vector2d& p) {
  const double w = h(2, 0) * p.x() + h(2, 1) * p.y() + h(2, 2);
  return {(h(0, 0) * p.x() + h(0, 1) * p.y() + h(0, 2)) / w,
          (h(1, 0) * p.x() + h(1, 1) * p.y() + h(1, 2)) / w};
}

// Scalar pinhole projection with two radial terms.
inline Vector2d project(double fx, double fy, double cx, double cy, double k1, double k2,
                        const Vector3d& xc) {
  const double a = xc.x() / xc.z();
  const double b = xc.y() / xc.z();
  const double rho2 = a * a + b * b;
  const double d = 1.0 + k1 * rho2 + k2 * rho2 * rho2;
  return {cx + fx * d * a, cy + fy * d * b};
}

inline double frobenius_rel(const Matrix3d& a, const Matrix3d& b) {
  return (a - b).norm() / b.norm();
}

// Both matrices scaled to unit Frobenius norm with a common sign.
inline double projective_distance(const Matrix3d& a, const Matrix3d& b) {
  const Matrix3d an = a / a.norm();
  const Matrix3d bn = b / b.norm();
  return std::min((an - bn).norm(), (an + bn).norm());
}

// Brute-force intensity-weighted centroid over a rectangle of the frame.
inline Vector2d centroid(const colcal::AccumFrame& f, int x0, int y0, int x1, int y1) {
  double s = 0, sx = 0, sy = 0;
  for (int y = std::max(0, y0); y < std::min(f.height, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(f.width, x1); ++x) {
      const double v = f.at(x, y);
      s += v;
      sx += v * x;
      sy += v * y;
    }
  }
  return {sx / s, sy / s};
}

// Central finite differences of the stacked residual vector along each
// parameter direction of the flat increment layout.
inline Eigen::MatrixXd numeric_jacobian(const colcal::ParameterVector& theta,
                                        std::span<const colcal::Correspondence> pairs,
                                        double rel_step = 1e-6) {
  const int n = theta.size();
  const auto m = static_cast<Eigen::Index>(2 * pairs.size());
  Eigen::MatrixXd j(m, n);
  auto stacked = [&](const colcal::ParameterVector& p) {
    const auto res = colcal::compute_residuals(p, pairs);
    Eigen::VectorXd v(m);
    for (std::size_t i = 0; i < res.size(); ++i) {
      v(static_cast<Eigen::Index>(2 * i)) = res[i].du;
      v(static_cast<Eigen::Index>(2 * i + 1)) = res[i].dv;
    }
    return v;
  };
  // Magnitudes used to scale the step of each shared parameter.
  std::vector<double> scale(static_cast<std::size_t>(n), 1.0);
  const double shared[] = {theta.intrinsics.fx, theta.intrinsics.fy, theta.intrinsics.cx,
                           theta.intrinsics.cy, theta.distortion.k1, theta.distortion.k2,
                           theta.offset.x,      theta.offset.y,      theta.offset.r};
  for (int i = 0; i < theta.shared_size(); ++i) {
    scale[static_cast<std::size_t>(i)] = std::max(1.0, std::abs(shared[i]));
  }
  if (theta.mode == colcal::PoseMode::Free6Dof) {
    for (int v = 0; v < theta.num_views(); ++v) {
      for (int a = 0; a < 3; ++a) {
        scale[static_cast<std::size_t>(theta.shared_size() + v * 6 + 3 + a)] =
            std::max(1.0, std::abs(theta.translations[static_cast<std::size_t>(v)](a)));
      }
    }
  }
  for (int c = 0; c < n; ++c) {
    const double h = rel_step * scale[static_cast<std::size_t>(c)];
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    d(c) = h;
    j.col(c) = (stacked(theta.retract(d)) - stacked(theta.retract(-d))) / (2.0 * h);
  }
  return j;
}

}  // namespace oracle
