#include "colcal/homography.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "colcal/error.hpp"

namespace colcal {

namespace {

// Similarity moving the centroid to the origin with RMS distance sqrt(2).
// Returns false when the points are (numerically) collinear.
bool normalizing_transform(std::span<const Vec2> pts, Mat3& t) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Vec2 d = p - mean;
    scatter += d * d.transpose();
  }
  const double rms = std::sqrt(scatter.trace() / static_cast<double>(pts.size()));
  if (!(rms > 0.0)) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  if (eig.eigenvalues()(0) <= 1e-12 * eig.eigenvalues()(1)) return false;
  const double s = std::sqrt(2.0) / rms;
  t << s, 0.0, -s * mean.x(), 0.0, s, -s * mean.y(), 0.0, 0.0, 1.0;
  return true;
}

}  // namespace

Homography Homography::normalized(const Mat3& m) {
  Homography h;
  if (std::abs(m(2, 2)) > 1e-12 * m.norm()) {
    h.H = m / m(2, 2);
  } else {
    h.H = m / m.norm();
  }
  return h;
}

Homography estimate_homography(std::span<const Vec2> model, std::span<const Vec2> image) {
  return estimate_homography(model, image, {});
}

Homography estimate_homography(std::span<const Vec2> model, std::span<const Vec2> image,
                               std::span<const double> weights) {
  if (!weights.empty() && weights.size() != model.size()) {
    throw Error(ErrorCode::Validation, "homography: one weight per point pair is required");
  }
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::Validation, "homography: weights must be finite and non-negative");
    }
  }
  if (model.size() != image.size()) {
    throw Error(ErrorCode::Validation, "homography: model and image point counts differ");
  }
  if (model.size() < 4) {
    throw Error(ErrorCode::InsufficientData,
                "homography needs at least 4 point pairs, got " + std::to_string(model.size()));
  }
  Mat3 tm;
  Mat3 ti;
  if (!normalizing_transform(model, tm)) {
    throw Error(ErrorCode::Degenerate, "homography: model points are collinear");
  }
  if (!normalizing_transform(image, ti)) {
    throw Error(ErrorCode::Degenerate, "homography: image points are collinear");
  }

  const auto n = static_cast<Eigen::Index>(model.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 m = tm * model[static_cast<std::size_t>(i)].homogeneous();
    const Vec3 p = ti * image[static_cast<std::size_t>(i)].homogeneous();
    const double x = m.x();
    const double y = m.y();
    const double u = p.x();
    const double v = p.y();
    a.row(2 * i) << x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v;
    if (!weights.empty()) {
      const double s = std::sqrt(weights[static_cast<std::size_t>(i)]);
      a.row(2 * i) *= s;
      a.row(2 * i + 1) *= s;
    }
  }
  // For exactly four pairs the system is 8x9; pad so the SVD exposes the
  // full right singular basis.
  if (a.rows() < 9) {
    a.conservativeResize(9, 9);
    a.row(8).setZero();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A second (near-)null direction means the pairs do not pin down H, e.g.
  // three of four points collinear.
  if (sv(7) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::Degenerate, "homography: point configuration is degenerate");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3 full = ti.inverse() * hn * tm;
  const Mat3 unit = full / full.norm();
  if (std::abs(unit.determinant()) <= 1e-12) {
    throw Error(ErrorCode::Degenerate, "homography: estimated matrix is rank deficient");
  }
  return Homography::normalized(full);
}

Homography estimate_homography(std::span<const Correspondence> pairs) {
  std::vector<Vec2> model;
  std::vector<Vec2> image;
  model.reserve(pairs.size());
  image.reserve(pairs.size());
  for (const auto& c : pairs) {
    if (c.model.z() != 0.0) {
      throw Error(ErrorCode::Validation, "homography: model points must have Z = 0");
    }
    model.emplace_back(c.model.x(), c.model.y());
    image.emplace_back(c.image.u, c.image.v);
  }
  return estimate_homography(model, image);
}

Vec2 apply_homography(const Homography& h, const Vec2& point) {
  const Vec3 p = h.H * point.homogeneous();
  if (std::abs(p.z()) < 1e-15) {
    throw Error(ErrorCode::PointAtInfinity, "homography maps point to infinity");
  }
  return p.hnormalized();
}

}  // namespace colcal
