#pragma once

#include <span>
#include <vector>

#include "colcal/geometry.hpp"
#include "colcal/homography.hpp"

namespace colcal {

/// Pinhole intrinsics with zero skew.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  Mat3 inverse() const;
  void validate() const;
};

/// Image of the absolute conic, omega ~ K^-T K^-1, up to scale. With zero
/// skew omega(0,1) = 0, leaving five unknowns.
struct AbsoluteConicImage {
  Mat3 omega = Mat3::Identity();

  static AbsoluteConicImage from_intrinsics(const Intrinsics& k);
  bool positive_definite() const;
};

/// Fixed camera centre of the collimator model, expressed in target
/// coordinates as (x, y, -r): every view shares it, only the rotation varies.
struct SphericalOffset {
  double x = 0.0;
  double y = 0.0;
  double r = 1.0;

  Vec3 center() const { return {x, y, -r}; }
};

struct IacSolution {
  AbsoluteConicImage conic;
  // Singular values of the stacked 2N x 5 system, descending.
  Eigen::VectorXd singular_values;
};

/// Two linear constraints per view, h1' w h2 = 0 and h1' w h1 = h2' w h2,
/// stacked and solved for the unit null vector. Throws InsufficientViews
/// (< 2 views), Degenerate (rank-deficient system) or InvalidConic.
IacSolution solve_iac_detailed(std::span<const Homography> homographies);
AbsoluteConicImage solve_iac(std::span<const Homography> homographies);

/// Closed-form zero-skew extraction. Throws InvalidConic when omega is not
/// positive definite.
Intrinsics intrinsics_from_iac(const AbsoluteConicImage& iac);

struct OffsetEstimate {
  SphericalOffset offset;
  std::vector<SphericalOffset> per_view;
  // Relative spread (max - min) / mean of the per-view radii.
  double radius_spread = 0.0;
  bool spread_warning = false;
  // |A12 - A13 * A23| of each normalized view matrix; zero for exact data.
  std::vector<double> xy_residual;
};

/// Evaluates A_i = H_i^-1 K K^T H_i^-T, normalizes by A_i(2,2) and reads
/// x, y and r^2 off its entries. r is averaged in the squared domain.
OffsetEstimate spherical_offset_from_views(std::span<const Homography> homographies,
                                           const Intrinsics& k);

inline constexpr double kRadiusSpreadWarning = 0.10;

/// Rotation R_ep (camera-to-target) of one view. The sign of the homography
/// scale is chosen so that the given model points lie in front of the
/// camera; with no points, the target origin is used.
Mat3 rotation_from_view(const Homography& h, const Intrinsics& k,
                        std::span<const Vec2> model_points = {});

/// Scale lambda_i of each view, read off H^T omega H with omega scaled to
/// K^-T K^-1.
std::vector<double> view_scales(std::span<const Homography> homographies, const Intrinsics& k);

struct SphericalInit {
  Intrinsics intrinsics;
  OffsetEstimate offset;
  std::vector<Mat3> rotations;  // R_ep per view
  std::vector<double> lambdas;
  Eigen::VectorXd iac_singular_values;
};

/// The full linear initialization from >= 2 homographies.
SphericalInit initialize_spherical(std::span<const Homography> homographies,
                                   std::span<const std::vector<Vec2>> model_points = {});

/// Free-motion (Zhang) initialization: same conic solve, then an independent
/// pose per view.
struct FreeInit {
  Intrinsics intrinsics;
  std::vector<Mat3> rotations;  // target-to-camera
  std::vector<Vec3> translations;
  Eigen::VectorXd iac_singular_values;
};

FreeInit initialize_free(std::span<const Homography> homographies,
                         std::span<const std::vector<Vec2>> model_points = {});

}  // namespace colcal
