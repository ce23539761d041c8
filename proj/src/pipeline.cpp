#include "colcal/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "colcal/collimator_init.hpp"
#include "colcal/error.hpp"
#include "colcal/homography.hpp"
#include "colcal/simulator.hpp"

namespace colcal {

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

double read_delta(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::Validation, "huber_delta must be a number or \"inf\"");
  }
  return j.get<double>();
}

std::string fmt_g(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string view_file_name(int view, EventFormat format) {
  return "events_view" + std::to_string(view) + (format == EventFormat::Csv ? ".csv" : ".bin");
}

int report_error(std::ostream& err, const std::exception& e) {
  err << "error: " << e.what() << '\n';
  return kExitInputError;
}

// Keys of an object, sorted, for parameter-set comparison.
std::set<std::string> keys_of(const json& j) {
  std::set<std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) out.insert(it.key());
  return out;
}

EvaluationColumn load_column(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const ParseError& e) {
    throw Error(ErrorCode::Evaluation, e.what());
  }
  if (!j.is_object() || !j.contains("intrinsics") || !j.contains("distortion")) {
    throw Error(ErrorCode::Evaluation,
                path.string() + ": model mismatch, expected intrinsics and distortion");
  }
  const std::set<std::string> want_k{"cx", "cy", "fx", "fy"};
  const std::set<std::string> want_d{"k1", "k2"};
  if (keys_of(j.at("intrinsics")) != want_k || keys_of(j.at("distortion")) != want_d) {
    throw Error(ErrorCode::Evaluation,
                path.string() + ": model mismatch, parameter set differs from fx fy cx cy k1 k2");
  }
  EvaluationColumn col;
  col.label = j.contains("mode") ? j.at("mode").get<std::string>() : path.stem().string();
  col.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  col.distortion = distortion_from_json(j.at("distortion"));
  if (j.contains("statistics") && j.at("statistics").contains("mean_error")) {
    col.reprojection_error = j.at("statistics").at("mean_error").get<double>();
  }
  return col;
}

std::vector<std::pair<std::string, double>> column_values(const EvaluationColumn& c) {
  return {{"fx", c.intrinsics.fx}, {"fy", c.intrinsics.fy}, {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy}, {"k1", c.distortion.k1}, {"k2", c.distortion.k2}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  if (j.contains("inputs")) {
    const auto& in = j.at("inputs");
    if (in.contains("events")) {
      for (const auto& p : in.at("events")) {
        c.event_files.push_back(resolve(base_dir, p.get<std::string>()));
      }
    }
    if (in.contains("format")) {
      c.event_format = parse_event_format(in.at("format").get<std::string>());
    }
    if (in.contains("correspondences")) {
      c.correspondences = resolve(base_dir, in.at("correspondences").get<std::string>());
    }
    if (in.contains("sensor")) {
      c.sensor_width = in.at("sensor").at("width").get<int>();
      c.sensor_height = in.at("sensor").at("height").get<int>();
    }
  }
  if (j.contains("target")) c.target = target_from_json(j.at("target"));
  if (j.contains("accumulation")) {
    const auto& a = j.at("accumulation");
    if (a.contains("window_us")) c.window_us = a.at("window_us").get<std::int64_t>();
    if (a.contains("mode")) c.accum_mode = parse_accum_mode(a.at("mode").get<std::string>());
  }
  if (j.contains("detection")) {
    const auto& d = j.at("detection");
    if (d.contains("threshold")) c.detection.threshold = d.at("threshold").get<double>();
    if (d.contains("min_area")) c.detection.min_area = d.at("min_area").get<int>();
    if (d.contains("max_area")) c.detection.max_area = d.at("max_area").get<int>();
  }
  if (j.contains("calibration")) {
    const auto& cal = j.at("calibration");
    if (cal.contains("mode")) c.mode = parse_pose_mode(cal.at("mode").get<std::string>());
    if (cal.contains("huber_delta")) c.lm.huber_delta = read_delta(cal.at("huber_delta"));
    if (cal.contains("max_iterations")) c.lm.max_iterations = cal.at("max_iterations").get<int>();
    if (cal.contains("relative_cost_tolerance")) {
      c.lm.relative_cost_tolerance = cal.at("relative_cost_tolerance").get<double>();
    }
    if (cal.contains("initial_damping")) {
      c.lm.initial_damping = cal.at("initial_damping").get<double>();
    }
  }
  if (j.contains("out")) c.out_dir = resolve(base_dir, j.at("out").get<std::string>());
  return c;
}

json PipelineConfig::to_json() const {
  json inputs = json::object();
  json events = json::array();
  for (const auto& p : event_files) events.push_back(p.generic_string());
  inputs["events"] = events;
  inputs["format"] = std::string(to_string(event_format));
  if (correspondences) inputs["correspondences"] = correspondences->generic_string();
  inputs["sensor"] = {{"width", sensor_width}, {"height", sensor_height}};
  json delta = std::isfinite(lm.huber_delta) ? json(lm.huber_delta) : json("inf");
  return {{"inputs", inputs},
          {"target", colcal::to_json(target)},
          {"accumulation",
           {{"window_us", window_us}, {"mode", std::string(to_string(accum_mode))}}},
          {"detection",
           {{"threshold", detection.threshold},
            {"min_area", detection.min_area},
            {"max_area", detection.max_area}}},
          {"calibration",
           {{"mode", std::string(to_string(mode))},
            {"huber_delta", delta},
            {"max_iterations", lm.max_iterations},
            {"relative_cost_tolerance", lm.relative_cost_tolerance},
            {"initial_damping", lm.initial_damping},
            {"damping_bounds", {lm.min_damping, lm.max_damping}}}}};
}

void PipelineConfig::validate() const {
  if (event_files.empty() && !correspondences) {
    throw Error(ErrorCode::Validation, "config names no event files and no correspondence CSV");
  }
  for (const auto& p : event_files) {
    if (!fs::exists(p)) throw Error(ErrorCode::Validation, "missing input " + p.string());
  }
  if (correspondences && !fs::exists(*correspondences)) {
    throw Error(ErrorCode::Validation, "missing input " + correspondences->string());
  }
  target.validate();
  if (window_us <= 0) throw Error(ErrorCode::Validation, "window_us must be > 0");
  if (!(lm.huber_delta > 0.0)) throw Error(ErrorCode::Validation, "huber_delta must be > 0");
  if (lm.max_iterations <= 0) throw Error(ErrorCode::Validation, "max_iterations must be > 0");
  if (detection.min_area < 1) throw Error(ErrorCode::Validation, "min_area must be >= 1");
  if (sensor_width < 0 || sensor_height < 0) {
    throw Error(ErrorCode::Validation, "sensor size must be non-negative");
  }
}

Scenario Scenario::from_json(const json& j, std::optional<std::uint64_t> seed_override) {
  Scenario s;
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (seed_override) s.seed = *seed_override;
  int views = 3;
  if (j.contains("views")) views = j.at("views").get<int>();
  if (j.contains("duration_ms")) s.duration_ms = j.at("duration_ms").get<double>();
  if (j.contains("format")) s.format = parse_event_format(j.at("format").get<std::string>());
  if (j.contains("noise")) s.noise = noise_from_json(j.at("noise"));
  if (j.contains("ground_truth")) {
    s.ground_truth = ground_truth_from_json(j.at("ground_truth"));
    if (s.ground_truth.rotations.empty()) {
      s.ground_truth.rotations = sample_visible_rotations(s.ground_truth, views, s.seed);
    }
  } else {
    s.ground_truth = default_ground_truth(views, s.seed);
  }
  if (s.duration_ms < 0.0) throw Error(ErrorCode::Validation, "duration_ms must be >= 0");
  return s;
}

json Scenario::to_json() const {
  return {{"seed", seed},
          {"views", ground_truth.num_views()},
          {"duration_ms", duration_ms},
          {"format", std::string(colcal::to_string(format))},
          {"noise", colcal::to_json(noise)},
          {"ground_truth", colcal::to_json(ground_truth)}};
}

std::vector<Correspondence> extract_view(const EventStream& stream, const PipelineConfig& config,
                                         int view, std::vector<MarkerPoint>* markers) {
  const auto frames = accumulate(stream, config.window_us, config.accum_mode);
  if (frames.empty()) {
    throw Error(ErrorCode::InsufficientData, "view " + std::to_string(view) + " has no events");
  }
  std::size_t best = 0;
  double best_total = -1.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double total = frames[i].total();
    if (total > best_total) {
      best_total = total;
      best = i;
    }
  }
  auto detected = detect_markers(frames[best], config.detection);
  auto pairs = order_grid(detected, config.target, view);
  if (markers) *markers = std::move(detected);
  return pairs;
}

namespace {

constexpr int kHomographyReweightRounds = 5;

// DLT reweighted with the refinement's Huber weights on the transfer error,
// so outliers pull the linear start less.
Homography reweighted_homography(std::span<const Correspondence> view, double delta) {
  Homography h = estimate_homography(view);
  if (!std::isfinite(delta)) return h;
  std::vector<Vec2> model;
  std::vector<Vec2> image;
  for (const auto& c : view) {
    model.emplace_back(c.model.x(), c.model.y());
    image.emplace_back(c.image.u, c.image.v);
  }
  std::vector<double> weights(view.size(), 1.0);
  for (int round = 0; round < kHomographyReweightRounds; ++round) {
    for (std::size_t i = 0; i < view.size(); ++i) {
      const double e = (apply_homography(h, model[i]) - image[i]).norm();
      weights[i] = e <= delta ? 1.0 : delta / e;
    }
    h = estimate_homography(model, image, weights);
  }
  return h;
}

}  // namespace

CalibrationRun calibrate_correspondences(std::vector<Correspondence> pairs,
                                         const PipelineConfig& config) {
  const int n_views = count_views(pairs);
  if (n_views < 2) {
    throw Error(ErrorCode::InsufficientViews,
                "calibration needs a minimum of two images (views), got " +
                    std::to_string(n_views));
  }
  std::vector<std::vector<Correspondence>> by_view(static_cast<std::size_t>(n_views));
  for (const auto& c : pairs) by_view[static_cast<std::size_t>(c.view)].push_back(c);

  std::vector<Homography> homographies;
  std::vector<std::vector<Vec2>> model_points;
  for (const auto& view : by_view) {
    homographies.push_back(reweighted_homography(view, config.lm.huber_delta));
    std::vector<Vec2> pts;
    for (const auto& c : view) pts.emplace_back(c.model.x(), c.model.y());
    model_points.push_back(std::move(pts));
  }

  CalibrationRun run;
  ParameterVector init;
  if (config.mode == PoseMode::Spherical) {
    const auto lin = initialize_spherical(homographies, model_points);
    run.initialization = to_json(lin, homographies);
    init = make_spherical_parameters(lin);
  } else {
    const auto lin = initialize_free(homographies, model_points);
    run.initialization = to_json(lin, homographies);
    init = make_free_parameters(lin);
  }
  run.correspondences = std::move(pairs);
  run.report = optimize(init, run.correspondences, config.lm);
  return run;
}

CalibrationRun run_calibration(const PipelineConfig& config) {
  config.validate();
  std::vector<Correspondence> pairs;
  std::vector<std::vector<MarkerPoint>> markers;
  if (config.correspondences) {
    pairs = read_correspondences_csv(*config.correspondences);
  } else {
    for (std::size_t v = 0; v < config.event_files.size(); ++v) {
      const auto stream = read_events(config.event_files[v], config.event_format,
                                      config.sensor_width, config.sensor_height);
      std::vector<MarkerPoint> detected;
      auto view_pairs = extract_view(stream, config, static_cast<int>(v), &detected);
      pairs.insert(pairs.end(), view_pairs.begin(), view_pairs.end());
      markers.push_back(std::move(detected));
    }
  }
  CalibrationRun run = calibrate_correspondences(std::move(pairs), config);
  run.markers = std::move(markers);
  return run;
}

json report_json(const CalibrationRun& run, const PipelineConfig& config) {
  json out = to_json(run.report);
  out["initialization"] = run.initialization;
  out["accumulation_mode"] = std::string(to_string(config.accum_mode));
  out["config"] = config.to_json();
  return out;
}

std::string EvaluationTable::to_text() const {
  std::ostringstream out;
  auto cell = [&](const std::string& s, std::size_t w) {
    out << s;
    for (std::size_t i = s.size(); i < w; ++i) out << ' ';
  };
  const std::size_t w = 16;
  cell("parameter", 22);
  cell(ground_truth.label, w);
  for (const auto& m : methods) {
    cell(m.label, w);
    cell("abs delta", w);
    cell("rel delta", w);
  }
  out << '\n';
  const auto gt_vals = column_values(ground_truth);
  for (std::size_t row = 0; row < gt_vals.size(); ++row) {
    const bool distortion = row >= 4;
    const int digits = distortion ? 6 : 4;
    cell(gt_vals[row].first, 22);
    cell(fixed(gt_vals[row].second, digits), w);
    for (const auto& m : methods) {
      const double v = column_values(m)[row].second;
      const double abs_delta = v - gt_vals[row].second;
      const double denom = std::abs(gt_vals[row].second);
      cell(fixed(v, digits), w);
      cell(fixed(abs_delta, 6), w);
      cell(denom > 0.0 ? fixed(abs_delta / denom, 8) : "-", w);
    }
    out << '\n';
  }
  cell("reprojection error", 22);
  cell(ground_truth.reprojection_error ? fixed(*ground_truth.reprojection_error, 6) : "-", w);
  for (const auto& m : methods) {
    cell(m.reprojection_error ? fixed(*m.reprojection_error, 6) : "-", w);
    cell("", w);
    cell("", w);
  }
  out << '\n';
  return out.str();
}

std::string EvaluationTable::to_csv() const {
  std::ostringstream out;
  out << "parameter,ground_truth";
  for (const auto& m : methods) {
    out << ',' << m.label << ',' << m.label << "_abs_delta," << m.label << "_rel_delta";
  }
  out << '\n';
  const auto gt_vals = column_values(ground_truth);
  for (std::size_t row = 0; row < gt_vals.size(); ++row) {
    out << gt_vals[row].first << ',' << fmt_g(gt_vals[row].second);
    for (const auto& m : methods) {
      const double v = column_values(m)[row].second;
      const double abs_delta = v - gt_vals[row].second;
      const double denom = std::abs(gt_vals[row].second);
      out << ',' << fmt_g(v) << ',' << fmt_g(abs_delta) << ','
          << (denom > 0.0 ? fmt_g(abs_delta / denom) : fmt_g(abs_delta));
    }
    out << '\n';
  }
  out << "reprojection_error,"
      << (ground_truth.reprojection_error ? fmt_g(*ground_truth.reprojection_error) : "");
  for (const auto& m : methods) {
    out << ',' << (m.reprojection_error ? fmt_g(*m.reprojection_error) : "") << ",,";
  }
  out << '\n';
  return out.str();
}

EvaluationTable evaluate(const std::vector<fs::path>& reports, const fs::path& ground_truth) {
  if (reports.empty()) throw Error(ErrorCode::Evaluation, "no reports to evaluate");
  EvaluationTable table;
  table.ground_truth = load_column(ground_truth);
  table.ground_truth.label = "ground_truth";
  std::map<std::string, int> seen;
  for (const auto& p : reports) {
    auto col = load_column(p);
    const int n = seen[col.label]++;
    if (n > 0) col.label += "#" + std::to_string(n + 1);
    table.methods.push_back(std::move(col));
  }
  return table;
}

int cmd_simulate(const Scenario& scenario, const fs::path& out_dir, std::ostream& log,
                 std::ostream& err) {
  try {
    fs::create_directories(out_dir);
    const auto& gt = scenario.ground_truth;
    gt.validate();
    json truth = to_json(gt);
    truth["seed"] = scenario.seed;
    write_json(out_dir / "ground_truth.json", truth);
    write_json(out_dir / "scenario.json", scenario.to_json());

    json events = json::array();
    for (int v = 0; v < gt.num_views(); ++v) {
      const auto stream = simulate_events(gt, v, scenario.noise, scenario.duration_ms,
                                          scenario.seed * 7919 + static_cast<std::uint64_t>(v) + 1);
      const auto name = view_file_name(v, scenario.format);
      write_events(out_dir / name, stream, scenario.format);
      events.push_back(name);
      log << "view " << v << ": " << stream.size() << " events -> " << name << '\n';
    }
    const auto pairs = simulate_views(gt, scenario.noise, scenario.seed);
    write_correspondences_csv(out_dir / "correspondences.csv", pairs);

    // Ready-to-run calibration configs for both input routes.
    json from_events = {
        {"inputs",
         {{"events", events},
          {"format", std::string(to_string(scenario.format))},
          {"sensor", {{"width", gt.sensor_width}, {"height", gt.sensor_height}}}}},
        {"target", to_json(gt.target)}};
    write_json(out_dir / "calibrate_events.json", from_events);
    json from_pairs = {{"inputs", {{"correspondences", "correspondences.csv"}}},
                       {"target", to_json(gt.target)}};
    write_json(out_dir / "calibrate_correspondences.json", from_pairs);
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_accumulate(const fs::path& events, EventFormat format, int width, int height,
                   std::int64_t window_us, AccumMode mode, const fs::path& out_dir,
                   std::ostream& log, std::ostream& err) {
  try {
    const auto stream = read_events(events, format, width, height);
    const auto frames = accumulate(stream, window_us, mode);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu", i);
      write_pgm(out_dir / (std::string(name) + ".pgm"), frames[i]);
      write_frame_csv(out_dir / (std::string(name) + ".csv"), frames[i]);
    }
    log << frames.size() << " frames (" << to_string(mode) << ", " << window_us << " us)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_detect(const PipelineConfig& config, std::ostream& log, std::ostream& err) {
  try {
    if (config.event_files.empty()) {
      throw Error(ErrorCode::Validation, "detect needs event files");
    }
    config.validate();
    fs::create_directories(config.out_dir);
    std::vector<std::vector<MarkerPoint>> markers;
    std::vector<Correspondence> pairs;
    bool ordered = true;
    for (std::size_t v = 0; v < config.event_files.size(); ++v) {
      const auto stream = read_events(config.event_files[v], config.event_format,
                                      config.sensor_width, config.sensor_height);
      const auto frames = accumulate(stream, config.window_us, config.accum_mode);
      std::vector<MarkerPoint> detected;
      if (!frames.empty()) {
        const auto best = std::max_element(frames.begin(), frames.end(),
                                           [](const AccumFrame& a, const AccumFrame& b) {
                                             return a.total() < b.total();
                                           });
        detected = detect_markers(*best, config.detection);
      }
      log << "view " << v << ": " << detected.size() << " markers\n";
      try {
        auto view_pairs = order_grid(detected, config.target, static_cast<int>(v));
        pairs.insert(pairs.end(), view_pairs.begin(), view_pairs.end());
      } catch (const Error& e) {
        ordered = false;
        log << "view " << v << ": not ordered (" << e.what() << ")\n";
      }
      markers.push_back(std::move(detected));
    }
    write_markers_csv(config.out_dir / "markers.csv", markers);
    if (ordered) write_correspondences_csv(config.out_dir / "correspondences.csv", pairs);
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_calibrate(const PipelineConfig& config, std::ostream& log, std::ostream& err) {
  try {
    fs::create_directories(config.out_dir);
    CalibrationRun run;
    int code = kExitOk;
    try {
      run = run_calibration(config);
    } catch (const NonConvergenceError& e) {
      err << "error: " << e.what() << '\n';
      run.report = e.report();
      code = kExitNonConvergence;
    }
    if (code == kExitOk && !run.report.converged) code = kExitNonConvergence;
    write_json(config.out_dir / "report.json", report_json(run, config));
    write_residuals_csv(config.out_dir / "residuals.csv", run.report.residuals);
    if (!run.correspondences.empty()) {
      write_correspondences_csv(config.out_dir / "correspondences.csv", run.correspondences);
    }
    if (!run.markers.empty()) write_markers_csv(config.out_dir / "markers.csv", run.markers);
    const auto& k = run.report.parameters.intrinsics;
    log << "mode " << to_string(config.mode) << ": fx=" << fixed(k.fx, 3)
        << " fy=" << fixed(k.fy, 3) << " cx=" << fixed(k.cx, 3) << " cy=" << fixed(k.cy, 3)
        << " rms=" << fixed(run.report.rms_error, 6) << " px, " << run.report.iterations
        << " iterations (" << run.report.termination << ")\n";
    return code;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

int cmd_evaluate(const std::vector<fs::path>& reports, const fs::path& ground_truth,
                 const std::optional<fs::path>& out_dir, std::ostream& log, std::ostream& err) {
  try {
    const auto table = evaluate(reports, ground_truth);
    log << table.to_text();
    if (out_dir) {
      fs::create_directories(*out_dir);
      std::ofstream csv(*out_dir / "evaluation.csv");
      if (!csv) throw Error(ErrorCode::Io, "cannot write evaluation.csv");
      csv << table.to_csv();
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
}

}  // namespace colcal
