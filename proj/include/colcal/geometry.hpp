#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace colcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rotation matrix from an axis-angle vector (direction = axis, norm = angle).
Mat3 rotation_from_axis_angle(const Vec3& axis_angle);

/// Axis-angle vector of a rotation; the angle lies in [0, pi].
Vec3 axis_angle_from_rotation(const Mat3& rotation);

/// Nearest rotation in the Frobenius sense (U * V^T with det correction).
Mat3 nearest_rotation(const Mat3& m);

/// Geodesic angle between two rotations, radians.
double rotation_distance(const Mat3& a, const Mat3& b);

Mat3 skew(const Vec3& v);

}  // namespace colcal
