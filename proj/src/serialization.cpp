#include "colcal/serialization.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <string>

#include "colcal/error.hpp"

namespace colcal {

namespace {

json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat3(const Mat3& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  }
  return out;
}

Vec3 read_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::Validation, "expected a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
void read_opt(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

json init_views(const std::vector<Mat3>& rotations, std::span<const Homography> homographies) {
  json views = json::array();
  for (std::size_t i = 0; i < rotations.size(); ++i) {
    json v = rotation_to_json(rotations[i]);
    if (i < homographies.size()) v["homography"] = to_json(homographies[i]);
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace

json to_json(const Homography& h) { return mat3(h.H); }

Homography homography_from_json(const json& j) {
  if (!j.is_array() || j.size() != 9) {
    throw Error(ErrorCode::Validation, "homography must be a row-major 9-element array");
  }
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = j[static_cast<std::size_t>(i)].get<double>();
  return Homography::normalized(m);
}

json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

json to_json(const Distortion& d) { return {{"k1", d.k1}, {"k2", d.k2}}; }

json to_json(const SphericalOffset& o) { return {{"x", o.x}, {"y", o.y}, {"r", o.r}}; }

json to_json(const TargetGeometry& t) {
  return {{"rows", t.rows}, {"cols", t.cols}, {"spacing", t.spacing}};
}

json to_json(const NoiseModel& n) {
  return {{"centroid_sigma", n.centroid_sigma},
          {"outlier_fraction", n.outlier_fraction},
          {"outlier_displacement", n.outlier_displacement},
          {"background_rate", n.background_rate},
          {"flicker_hz", n.flicker_hz},
          {"duty_cycle", n.duty_cycle},
          {"flicker_phase_us", n.flicker_phase_us},
          {"timestamp_jitter_us", n.timestamp_jitter_us},
          {"marker_radius_px", n.marker_radius_px}};
}

json to_json(const GroundTruth& gt) {
  json rotations = json::array();
  json matrices = json::array();
  for (const auto& r : gt.rotations) {
    rotations.push_back(vec3(axis_angle_from_rotation(r)));
    matrices.push_back(mat3(r));
  }
  return {{"sensor", {{"width", gt.sensor_width}, {"height", gt.sensor_height}}},
          {"intrinsics", to_json(gt.intrinsics)},
          {"distortion", to_json(gt.distortion)},
          {"offset", to_json(gt.offset)},
          {"target", to_json(gt.target)},
          {"rotations", rotations},
          {"rotation_matrices", matrices}};
}

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
               j.at("cy").get<double>()};
  k.validate();
  return k;
}

Distortion distortion_from_json(const json& j) {
  return {j.at("k1").get<double>(), j.at("k2").get<double>()};
}

SphericalOffset offset_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("r").get<double>()};
}

TargetGeometry target_from_json(const json& j) {
  TargetGeometry t;
  read_opt(j, "rows", t.rows);
  read_opt(j, "cols", t.cols);
  read_opt(j, "spacing", t.spacing);
  t.validate();
  return t;
}

NoiseModel noise_from_json(const json& j) {
  NoiseModel n;
  read_opt(j, "centroid_sigma", n.centroid_sigma);
  read_opt(j, "outlier_fraction", n.outlier_fraction);
  read_opt(j, "outlier_displacement", n.outlier_displacement);
  read_opt(j, "background_rate", n.background_rate);
  read_opt(j, "flicker_hz", n.flicker_hz);
  read_opt(j, "duty_cycle", n.duty_cycle);
  read_opt(j, "flicker_phase_us", n.flicker_phase_us);
  read_opt(j, "timestamp_jitter_us", n.timestamp_jitter_us);
  read_opt(j, "marker_radius_px", n.marker_radius_px);
  n.validate();
  return n;
}

GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth gt;
  if (j.contains("sensor")) {
    gt.sensor_width = j.at("sensor").at("width").get<int>();
    gt.sensor_height = j.at("sensor").at("height").get<int>();
  }
  gt.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  if (j.contains("distortion")) gt.distortion = distortion_from_json(j.at("distortion"));
  gt.offset = offset_from_json(j.at("offset"));
  if (j.contains("target")) gt.target = target_from_json(j.at("target"));
  if (j.contains("rotations")) {
    for (const auto& r : j.at("rotations")) {
      gt.rotations.push_back(rotation_from_axis_angle(read_vec3(r)));
    }
  }
  return gt;
}

json rotation_to_json(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  return {{"axis_angle", vec3(axis_angle_from_rotation(r))},
          {"quaternion", json::array({q.w(), q.x(), q.y(), q.z()})},
          {"matrix", mat3(r)}};
}

json to_json(const SphericalInit& init, std::span<const Homography> homographies) {
  json per_view = json::array();
  for (std::size_t i = 0; i < init.offset.per_view.size(); ++i) {
    per_view.push_back({{"x", init.offset.per_view[i].x},
                        {"y", init.offset.per_view[i].y},
                        {"r", init.offset.per_view[i].r},
                        {"xy_residual", init.offset.xy_residual[i]},
                        {"lambda", i < init.lambdas.size() ? init.lambdas[i] : 0.0}});
  }
  json sv = json::array();
  for (Eigen::Index i = 0; i < init.iac_singular_values.size(); ++i) {
    sv.push_back(init.iac_singular_values(i));
  }
  return {{"model", "spherical"},
          {"intrinsics", to_json(init.intrinsics)},
          {"offset", to_json(init.offset.offset)},
          {"views", init_views(init.rotations, homographies)},
          {"diagnostics",
           {{"per_view", per_view},
            {"radius_spread", init.offset.radius_spread},
            {"radius_spread_warning", init.offset.spread_warning},
            {"conic_singular_values", sv}}}};
}

json to_json(const FreeInit& init, std::span<const Homography> homographies) {
  json views = init_views(init.rotations, homographies);
  for (std::size_t i = 0; i < init.translations.size(); ++i) {
    views[i]["translation"] = vec3(init.translations[i]);
  }
  json sv = json::array();
  for (Eigen::Index i = 0; i < init.iac_singular_values.size(); ++i) {
    sv.push_back(init.iac_singular_values(i));
  }
  return {{"model", "free6dof"},
          {"intrinsics", to_json(init.intrinsics)},
          {"views", views},
          {"diagnostics", {{"conic_singular_values", sv}}}};
}

json to_json(const ParameterVector& p) {
  json views = json::array();
  for (int i = 0; i < p.num_views(); ++i) {
    const Mat3 r = rotation_from_axis_angle(p.rotations[static_cast<std::size_t>(i)]);
    json v = rotation_to_json(r);
    v["rotation_kind"] = p.mode == PoseMode::Spherical ? "camera_to_target" : "target_to_camera";
    if (p.mode == PoseMode::Free6Dof) {
      v["translation"] = vec3(p.translations[static_cast<std::size_t>(i)]);
    }
    views.push_back(std::move(v));
  }
  json out = {{"mode", std::string(to_string(p.mode))},
              {"intrinsics", to_json(p.intrinsics)},
              {"distortion", to_json(p.distortion)}};
  if (p.mode == PoseMode::Spherical) out["offset"] = to_json(p.offset);
  out["views"] = std::move(views);
  return out;
}

json to_json(const CalibrationReport& report) {
  json out = to_json(report.parameters);
  out["statistics"] = {{"num_views", report.parameters.num_views()},
                       {"num_points", report.residuals.size()},
                       {"rms_error", report.rms_error},
                       {"mean_error", report.mean_error},
                       {"initial_cost", report.initial_cost},
                       {"final_cost", report.final_cost},
                       {"iterations", report.iterations},
                       {"final_damping", report.final_damping},
                       {"converged", report.converged},
                       {"termination", report.termination}};
  out["cost_trace"] = report.cost_trace;
  json residuals = json::array();
  for (const auto& r : report.residuals) {
    residuals.push_back({{"view", r.view}, {"point", r.point}, {"du", r.du}, {"dv", r.dv}});
  }
  out["residuals"] = std::move(residuals);
  return out;
}

void write_residuals_csv(const std::filesystem::path& path, std::span<const Residual> residuals) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "view,point,du,dv\n";
  for (const auto& r : residuals) {
    out << r.view << ',' << r.point << ',' << fmt(r.du) << ',' << fmt(r.dv) << '\n';
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": parse error at byte " + std::to_string(e.byte) +
                            ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace colcal
