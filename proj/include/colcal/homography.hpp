#pragma once

#include <span>

#include "colcal/features.hpp"
#include "colcal/geometry.hpp"

namespace colcal {

/// Plane-to-image homography, defined up to scale. Stored with H(2,2) = 1
/// when that entry is nonzero, otherwise with unit Frobenius norm.
struct Homography {
  Mat3 H = Mat3::Identity();

  static Homography normalized(const Mat3& m);
};

/// Normalized DLT: both point sets are translated to their centroid and
/// scaled to RMS distance sqrt(2) before the 2n x 9 system is solved by SVD.
/// Throws InsufficientData for < 4 pairs and Degenerate for collinear sets.
Homography estimate_homography(std::span<const Vec2> model, std::span<const Vec2> image);

/// Weighted DLT: each pair's two equations are scaled by sqrt(weight).
/// An empty span means unit weights.
Homography estimate_homography(std::span<const Vec2> model, std::span<const Vec2> image,
                               std::span<const double> weights);

/// Uses the (X, Y) of each model point; Z must be zero.
Homography estimate_homography(std::span<const Correspondence> pairs);

/// Maps a target-plane point to the image. Throws PointAtInfinity when the
/// homogeneous coordinate vanishes.
Vec2 apply_homography(const Homography& h, const Vec2& point);

}  // namespace colcal
