#include "colcal/collimator_init.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "colcal/error.hpp"

namespace colcal {

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;

// Coefficients of h' w g in (w11, w22, w13, w23, w33).
Vec5 conic_row(const Vec3& h, const Vec3& g) {
  Vec5 v;
  v << h(0) * g(0), h(1) * g(1), h(0) * g(2) + h(2) * g(0), h(1) * g(2) + h(2) * g(1),
      h(2) * g(2);
  return v;
}

// Pixel scale used to condition the conic system: distance of the image of
// the target origin from the image origin, averaged over views.
double pixel_scale(std::span<const Homography> homographies) {
  double sum = 0.0;
  int n = 0;
  for (const auto& h : homographies) {
    const Vec3 o = h.H.col(2);
    if (std::abs(o.z()) > 1e-12 * o.norm()) {
      sum += o.head<2>().norm() / std::abs(o.z());
      ++n;
    }
  }
  return n > 0 ? std::max(1.0, sum / n) : 1.0;
}

struct Pose {
  Mat3 rotation;  // target-to-camera
  Vec3 translation;
};

// Decomposes K^-1 H = lambda [r1 r2 t], resolving the sign of lambda with
// the positive-depth test on the given points.
Pose decompose_view(const Homography& h, const Intrinsics& k, std::span<const Vec2> points) {
  const Mat3 b = k.inverse() * h.H;
  const double lambda = 0.5 * (b.col(0).norm() + b.col(1).norm());
  if (!(lambda > 0.0)) throw Error(ErrorCode::InvalidGeometry, "homography has zero scale");
  const Vec3 r1 = b.col(0) / lambda;
  const Vec3 r2 = b.col(1) / lambda;
  const Vec3 t = b.col(2) / lambda;

  const std::vector<Vec2> origin{Vec2::Zero()};
  if (points.empty()) points = origin;
  for (double sign : {1.0, -1.0}) {
    bool in_front = true;
    for (const auto& p : points) {
      const double depth = sign * (r1.z() * p.x() + r2.z() * p.y() + t.z());
      if (!(depth > 0.0)) {
        in_front = false;
        break;
      }
    }
    if (!in_front) continue;
    Mat3 m;
    m.col(0) = sign * r1;
    m.col(1) = sign * r2;
    m.col(2) = r1.cross(r2);
    return {nearest_rotation(m), sign * t};
  }
  throw Error(ErrorCode::Orientation,
              "no homography sign places the target in front of the camera");
}

}  // namespace

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 Intrinsics::inverse() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
      !std::isfinite(cx) || !std::isfinite(cy)) {
    throw Error(ErrorCode::Validation, "intrinsics need finite, positive focal lengths");
  }
}

AbsoluteConicImage AbsoluteConicImage::from_intrinsics(const Intrinsics& k) {
  const Mat3 kinv = k.inverse();
  return {kinv.transpose() * kinv};
}

bool AbsoluteConicImage::positive_definite() const {
  const double m1 = omega(0, 0);
  const double m2 = omega.topLeftCorner<2, 2>().determinant();
  const double m3 = omega.determinant();
  return m1 > 0.0 && m2 > 0.0 && m3 > 0.0;
}

IacSolution solve_iac_detailed(std::span<const Homography> homographies) {
  if (homographies.size() < 2) {
    throw Error(ErrorCode::InsufficientViews,
                "intrinsic initialization needs at least 2 views (a minimum of two images is "
                "sufficient), got " +
                    std::to_string(homographies.size()));
  }
  const double s = pixel_scale(homographies);
  const Mat3 t = Eigen::Vector3d(1.0 / s, 1.0 / s, 1.0).asDiagonal();

  const auto n = static_cast<Eigen::Index>(homographies.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(2 * n, 5), 5);
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat3 h = t * homographies[static_cast<std::size_t>(i)].H;
    h /= h.norm();
    const Vec3 h1 = h.col(0);
    const Vec3 h2 = h.col(1);
    Vec5 e1 = conic_row(h1, h2);
    Vec5 e2 = conic_row(h1, h1) - conic_row(h2, h2);
    if (e1.norm() > 0.0) e1.normalize();
    if (e2.norm() > 0.0) e2.normalize();
    a.row(2 * i) = e1.transpose();
    a.row(2 * i + 1) = e2.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv(3) <= 1e-8 * sv(0)) {
    throw Error(ErrorCode::Degenerate,
                "conic system is rank deficient; views do not constrain the intrinsics "
                "(repeated or degenerate rotations)");
  }
  const Vec5 w = svd.matrixV().col(4);
  Mat3 omega_n;
  omega_n << w(0), 0.0, w(2), 0.0, w(1), w(3), w(2), w(3), w(4);
  Mat3 omega = t.transpose() * omega_n * t;
  omega /= omega.norm();
  if (omega(0, 0) < 0.0) omega = -omega;

  IacSolution out{{omega}, sv};
  if (!out.conic.positive_definite()) {
    throw Error(ErrorCode::InvalidConic,
                "estimated conic is not positive definite (degenerate motion or bad homographies)");
  }
  return out;
}

AbsoluteConicImage solve_iac(std::span<const Homography> homographies) {
  return solve_iac_detailed(homographies).conic;
}

Intrinsics intrinsics_from_iac(const AbsoluteConicImage& iac) {
  const Mat3& w = iac.omega;
  if (!(w(0, 0) > 0.0) || !(w(1, 1) > 0.0)) {
    throw Error(ErrorCode::InvalidConic, "conic diagonal must be positive");
  }
  const double s = w(2, 2) - w(0, 2) * w(0, 2) / w(0, 0) - w(1, 2) * w(1, 2) / w(1, 1);
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidConic, "conic is not positive definite");
  Intrinsics k;
  k.cx = -w(0, 2) / w(0, 0);
  k.cy = -w(1, 2) / w(1, 1);
  k.fx = std::sqrt(s / w(0, 0));
  k.fy = std::sqrt(s / w(1, 1));
  return k;
}

OffsetEstimate spherical_offset_from_views(std::span<const Homography> homographies,
                                           const Intrinsics& k) {
  if (homographies.empty()) {
    throw Error(ErrorCode::InsufficientViews, "spherical offset needs at least one view");
  }
  const Mat3 kkt = k.matrix() * k.matrix().transpose();
  OffsetEstimate out;
  double sum_x = 0.0;
  double sum_y = 0.0;
  double sum_r2 = 0.0;
  double r_min = std::numeric_limits<double>::infinity();
  double r_max = 0.0;
  for (std::size_t i = 0; i < homographies.size(); ++i) {
    const Mat3& h = homographies[i].H;
    Eigen::FullPivLU<Mat3> lu(h);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::InvalidGeometry, "view " + std::to_string(i) + ": H is singular");
    }
    const Mat3 hinv = lu.inverse();
    Mat3 a = hinv * kkt * hinv.transpose();
    a /= a(2, 2);
    const double x = a(0, 2);
    const double y = a(1, 2);
    const double r2 = 0.5 * ((a(0, 0) - x * x) + (a(1, 1) - y * y));
    if (!(r2 > 0.0)) {
      throw Error(ErrorCode::InvalidGeometry,
                  "view " + std::to_string(i) + ": non-positive squared radius");
    }
    const double r = std::sqrt(r2);
    out.per_view.push_back({x, y, r});
    out.xy_residual.push_back(std::abs(a(0, 1) - x * y));
    sum_x += x;
    sum_y += y;
    sum_r2 += r2;
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  const auto n = static_cast<double>(homographies.size());
  out.offset = {sum_x / n, sum_y / n, std::sqrt(sum_r2 / n)};
  out.radius_spread = (r_max - r_min) / out.offset.r;
  out.spread_warning = out.radius_spread > kRadiusSpreadWarning;
  return out;
}

Mat3 rotation_from_view(const Homography& h, const Intrinsics& k,
                        std::span<const Vec2> model_points) {
  return decompose_view(h, k, model_points).rotation.transpose();
}

std::vector<double> view_scales(std::span<const Homography> homographies, const Intrinsics& k) {
  const Mat3 omega = AbsoluteConicImage::from_intrinsics(k).omega;
  std::vector<double> out;
  for (const auto& h : homographies) {
    const Mat3 c = h.H.transpose() * omega * h.H;
    out.push_back(std::sqrt(std::max(0.0, c(0, 0))));
  }
  return out;
}

SphericalInit initialize_spherical(std::span<const Homography> homographies,
                                   std::span<const std::vector<Vec2>> model_points) {
  SphericalInit out;
  const auto iac = solve_iac_detailed(homographies);
  out.iac_singular_values = iac.singular_values;
  out.intrinsics = intrinsics_from_iac(iac.conic);
  out.offset = spherical_offset_from_views(homographies, out.intrinsics);
  for (std::size_t i = 0; i < homographies.size(); ++i) {
    const std::span<const Vec2> pts =
        i < model_points.size() ? std::span<const Vec2>(model_points[i]) : std::span<const Vec2>();
    out.rotations.push_back(rotation_from_view(homographies[i], out.intrinsics, pts));
  }
  out.lambdas = view_scales(homographies, out.intrinsics);
  return out;
}

FreeInit initialize_free(std::span<const Homography> homographies,
                         std::span<const std::vector<Vec2>> model_points) {
  FreeInit out;
  const auto iac = solve_iac_detailed(homographies);
  out.iac_singular_values = iac.singular_values;
  out.intrinsics = intrinsics_from_iac(iac.conic);
  for (std::size_t i = 0; i < homographies.size(); ++i) {
    const std::span<const Vec2> pts =
        i < model_points.size() ? std::span<const Vec2>(model_points[i]) : std::span<const Vec2>();
    const Pose pose = decompose_view(homographies[i], out.intrinsics, pts);
    out.rotations.push_back(pose.rotation);
    out.translations.push_back(pose.translation);
  }
  return out;
}

}  // namespace colcal
