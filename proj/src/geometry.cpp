#include "colcal/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace colcal {

Mat3 rotation_from_axis_angle(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-14) return Mat3::Identity() + skew(axis_angle);
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vec3 axis_angle_from_rotation(const Mat3& rotation) {
  Eigen::AngleAxisd aa(rotation);
  return aa.axis() * aa.angle();
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace colcal
