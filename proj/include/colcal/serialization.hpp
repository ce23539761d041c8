#pragma once

#include <filesystem>
#include <span>

#include "json.hpp"

#include "colcal/collimator_init.hpp"
#include "colcal/homography.hpp"
#include "colcal/refine.hpp"
#include "colcal/simulator.hpp"

namespace colcal {

using json = nlohmann::ordered_json;

json to_json(const Homography& h);
Homography homography_from_json(const json& j);

json to_json(const Intrinsics& k);
json to_json(const Distortion& d);
json to_json(const SphericalOffset& o);
json to_json(const TargetGeometry& t);
json to_json(const NoiseModel& n);
json to_json(const GroundTruth& gt);

Intrinsics intrinsics_from_json(const json& j);
Distortion distortion_from_json(const json& j);
SphericalOffset offset_from_json(const json& j);
TargetGeometry target_from_json(const json& j);
NoiseModel noise_from_json(const json& j);

/// Rotations are read from "rotations" as axis-angle triples when present;
/// otherwise the caller samples them.
GroundTruth ground_truth_from_json(const json& j);

/// Rotation as axis-angle, unit quaternion [w, x, y, z] and row-major matrix.
json rotation_to_json(const Mat3& r);

json to_json(const SphericalInit& init, std::span<const Homography> homographies);
json to_json(const FreeInit& init, std::span<const Homography> homographies);

json to_json(const ParameterVector& p);
json to_json(const CalibrationReport& report);

void write_residuals_csv(const std::filesystem::path& path, std::span<const Residual> residuals);

/// Parses a JSON file; syntax errors become ParseError with the byte offset.
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

}  // namespace colcal
