// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "colcal/collimator_init.hpp"
#include "colcal/error.hpp"
#include "colcal/homography.hpp"
#include "colcal/pipeline.hpp"
#include "colcal/refine.hpp"
#include "colcal/simulator.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace colcal;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<Homography> homographies_of(std::span<const Correspondence> pairs, int views) {
  std::vector<Homography> out;
  for (int v = 0; v < views; ++v) {
    std::vector<Correspondence> view;
    for (const auto& c : pairs) {
      if (c.view == v) view.push_back(c);
    }
    out.push_back(estimate_homography(view));
  }
  return out;
}

double focal_error(const Intrinsics& k, const Intrinsics& truth) {
  return std::max(rel(k.fx, truth.fx), rel(k.fy, truth.fy));
}

PipelineConfig spherical_config(double delta = 1.0) {
  PipelineConfig c;
  c.lm.huber_delta = delta;
  return c;
}

// 1. Noiseless three-view round trip from correspondences.
Outcome noiseless_round_trip() {
  double worst = 0.0;
  double worst_rms = 0.0;
  double worst_seconds = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto gt = default_ground_truth(3, seed);
    const auto pairs = simulate_views(gt, NoiseModel{}, seed);
    const auto start = std::chrono::steady_clock::now();
    const auto run = calibrate_correspondences(pairs, spherical_config());
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& p = run.report.parameters;
    for (double e : {rel(p.intrinsics.fx, gt.intrinsics.fx), rel(p.intrinsics.fy, gt.intrinsics.fy),
                     rel(p.intrinsics.cx, gt.intrinsics.cx), rel(p.intrinsics.cy, gt.intrinsics.cy),
                     rel(p.distortion.k1, gt.distortion.k1), rel(p.distortion.k2, gt.distortion.k2),
                     rel(p.offset.x, gt.offset.x), rel(p.offset.y, gt.offset.y),
                     rel(p.offset.r, gt.offset.r)}) {
      worst = std::max(worst, e);
    }
    worst_rms = std::max(worst_rms, run.report.rms_error);
    worst_seconds = std::max(worst_seconds, seconds);
  }
  return {worst < 1e-6 && worst_rms < 1e-8 && worst_seconds < 5.0,
          fmt("5 scenarios: max rel error %.2e (< 1e-6), max RMS %.2e px (< 1e-8), slowest %.3f s "
              "(< 5 s)",
              worst, worst_rms, worst_seconds)};
}

// 2. Linear initialization from exactly two views; one view is refused.
Outcome two_view_init() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto gt = default_ground_truth(2, seed);
    gt.distortion = {};  // the linear stage has no distortion terms
    const auto pairs = simulate_views(gt, NoiseModel{}, seed);
    const auto init = initialize_spherical(homographies_of(pairs, 2));
    for (double e : {rel(init.intrinsics.fx, gt.intrinsics.fx),
                     rel(init.intrinsics.fy, gt.intrinsics.fy),
                     rel(init.intrinsics.cx, gt.intrinsics.cx),
                     rel(init.intrinsics.cy, gt.intrinsics.cy),
                     rel(init.offset.offset.x, gt.offset.x), rel(init.offset.offset.y, gt.offset.y),
                     rel(init.offset.offset.r, gt.offset.r)}) {
      worst = std::max(worst, e);
    }
  }
  bool refused = false;
  {
    const auto gt = default_ground_truth(2, 1);
    const auto pairs = simulate_views(gt, NoiseModel{}, 1);
    auto hs = homographies_of(pairs, 2);
    hs.pop_back();
    try {
      initialize_spherical(hs);
    } catch (const Error& e) {
      refused = e.code() == ErrorCode::InsufficientViews;
    }
  }
  return {worst < 1e-5 && refused,
          fmt("2 views, 5 scenarios: max rel error of 7 init parameters %.2e (< 1e-5); 1 view "
              "refused as insufficient-views: %s",
              worst, refused ? "yes" : "no")};
}

// 3. Centroid noise of 0.1 px.
Outcome noise_regime() {
  NoiseModel noise;
  noise.centroid_sigma = 0.1;
  double worst_mean = 0.0;
  double worst_focal = 0.0;
  const int runs = 20;
  for (std::uint64_t seed = 1; seed <= runs; ++seed) {
    const auto gt = default_ground_truth(3, seed);
    const auto pairs = simulate_views(gt, noise, 1000 + seed);
    const auto run = calibrate_correspondences(pairs, spherical_config());
    worst_mean = std::max(worst_mean, run.report.mean_error);
    worst_focal = std::max(worst_focal, focal_error(run.report.parameters.intrinsics, gt.intrinsics));
  }
  return {worst_mean <= 0.15 && worst_focal <= 0.005,
          fmt("sigma 0.1 px, 3x49 markers, %d scenarios: worst mean reprojection %.4f px (<= "
              "0.15), worst focal error %.3f%% (<= 0.5%%)",
              runs, worst_mean, 100.0 * worst_focal)};
}

// 4. Huber loss against 10% outliers displaced by 10 px.
Outcome huber_robustness() {
  NoiseModel base;
  base.centroid_sigma = 0.1;
  NoiseModel dirty = base;
  dirty.outlier_fraction = 0.1;
  dirty.outlier_displacement = 10.0;
  const double inf = std::numeric_limits<double>::infinity();
  double sq_base = 0.0, sq_huber = 0.0, sq_quad = 0.0;
  int huber_wins = 0;
  const int runs = 20;
  for (std::uint64_t seed = 1; seed <= runs; ++seed) {
    const auto gt = default_ground_truth(3, seed);
    const auto clean = simulate_views(gt, base, 2000 + seed);
    const auto outl = simulate_views(gt, dirty, 2000 + seed);
    const double eb = focal_error(calibrate_correspondences(clean, spherical_config(1.0))
                                      .report.parameters.intrinsics, gt.intrinsics);
    const double eh = focal_error(calibrate_correspondences(outl, spherical_config(1.0))
                                      .report.parameters.intrinsics, gt.intrinsics);
    const double eq = focal_error(calibrate_correspondences(outl, spherical_config(inf))
                                      .report.parameters.intrinsics, gt.intrinsics);
    sq_base += eb * eb;
    sq_huber += eh * eh;
    sq_quad += eq * eq;
    if (eh < eq) ++huber_wins;
  }
  const double rb = std::sqrt(sq_base / runs);
  const double rh = std::sqrt(sq_huber / runs);
  const double rq = std::sqrt(sq_quad / runs);
  return {rh <= 3.0 * rb && rh < rq,
          fmt("RMS focal error over %d scenarios: sigma-only %.3f%%, Huber %.3f%% (%.2fx, <= 3x), "
              "quadratic %.3f%% (Huber smaller in %d/%d)",
              runs, 100 * rb, 100 * rh, rh / rb, 100 * rq, huber_wins, runs)};
}

// 5. Structural identity of a spherical view.
Outcome conic_identity() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_identity = 0.0;
  double worst_library = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics k{500 + 4500 * u(rng), 500 + 4500 * u(rng), 100 + 1000 * u(rng),
                       100 + 600 * u(rng)};
    const double r = 50 + 5000 * u(rng);
    const double x = r * (u(rng) - 0.5), y = r * (u(rng) - 0.5);
    const Mat3 r_ep = oracle::random_rotation_with_angle(rng, (std::numbers::pi / 3) * u(rng));
    const Mat3 h = oracle::spherical_homography(k.matrix(), r_ep, x, y, r);
    Mat3 a = h.inverse() * k.matrix() * k.matrix().transpose() * h.inverse().transpose();
    a /= a(2, 2);
    Mat3 expect;
    expect << r * r + x * x, x * y, x, x * y, r * r + y * y, y, x, y, 1;
    worst_identity = std::max(worst_identity, oracle::frobenius_rel(a, expect));

    // The library reads the offset off the same matrix.
    const std::vector<Homography> hs = {Homography::normalized(h)};
    const auto off = spherical_offset_from_views(hs, k).offset;
    Mat3 rebuilt;
    rebuilt << off.r * off.r + off.x * off.x, off.x * off.y, off.x, off.x * off.y,
        off.r * off.r + off.y * off.y, off.y, off.x, off.y, 1;
    worst_library = std::max(worst_library, oracle::frobenius_rel(rebuilt, expect));
  }
  return {worst_identity < 1e-10 && worst_library < 1e-10,
          fmt("1000 random configurations: max relative residual %.2e, library offset "
              "reconstruction %.2e (< 1e-10)",
              worst_identity, worst_library)};
}

// 6. Analytic Jacobian against central differences.
Outcome jacobian_check() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst[2] = {0.0, 0.0};
  for (int i = 0; i < 100; ++i) {
    const auto gt = default_ground_truth(3, 500 + static_cast<std::uint64_t>(i));
    const auto pairs = simulate_views(gt, NoiseModel{}, 1);
    ParameterVector sph = gt.parameters();
    sph.intrinsics.fx *= 1.0 + 0.02 * n(rng);
    sph.intrinsics.fy *= 1.0 + 0.02 * n(rng);
    sph.intrinsics.cx += 10 * n(rng);
    sph.intrinsics.cy += 10 * n(rng);
    sph.distortion = {0.3 * n(rng), 0.5 * n(rng)};
    sph.offset.x += 5 * n(rng);
    sph.offset.y += 5 * n(rng);
    sph.offset.r *= 1.0 + 0.02 * n(rng);
    for (auto& w : sph.rotations) w += 0.01 * Vec3(n(rng), n(rng), n(rng));

    ParameterVector fre;
    fre.mode = PoseMode::Free6Dof;
    fre.intrinsics = sph.intrinsics;
    fre.distortion = sph.distortion;
    for (int v = 0; v < sph.num_views(); ++v) {
      const Mat3 r_cam = sph.camera_rotation(v);
      fre.rotations.push_back(axis_angle_from_rotation(r_cam));
      fre.translations.push_back(-r_cam * sph.offset.center() + Vec3(n(rng), n(rng), 5 * n(rng)));
    }
    int m = 0;
    for (const auto* theta : {&sph, &fre}) {
      const auto a = jacobian(*theta, pairs);
      const auto fd = oracle::numeric_jacobian(*theta, pairs);
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
          const double scale = std::max({1.0, std::abs(a(r, c)), std::abs(fd(r, c))});
          worst[m] = std::max(worst[m], std::abs(a(r, c) - fd(r, c)) / scale);
        }
      }
      ++m;
    }
  }
  return {worst[0] <= 1e-5 && worst[1] <= 1e-5,
          fmt("100 configurations: max relative entry error spherical %.2e, free6dof %.2e (<= "
              "1e-5)",
              worst[0], worst[1])};
}

// 7. Events through the whole front end.
Outcome event_pipeline() {
  double worst_centroid = 0.0;
  double worst_focal = 0.0;
  int scenarios = 0;
  NoiseModel noise;
  noise.background_rate = 0.2;
  PipelineConfig config = spherical_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed, ++scenarios) {
    const auto gt = default_ground_truth(3, seed);
    const auto truth = project_markers(gt);
    std::vector<Correspondence> pairs;
    for (int v = 0; v < gt.num_views(); ++v) {
      const auto stream = simulate_events(gt, v, noise, 33.0, 100 * seed + v);
      const auto view = extract_view(stream, config, v);
      for (const auto& c : view) {
        const Vec2 p = truth[static_cast<std::size_t>(v)][static_cast<std::size_t>(c.model_index)];
        worst_centroid = std::max(worst_centroid, (Vec2(c.image.u, c.image.v) - p).norm());
      }
      pairs.insert(pairs.end(), view.begin(), view.end());
    }
    const auto run = calibrate_correspondences(pairs, config);
    worst_focal = std::max(worst_focal, focal_error(run.report.parameters.intrinsics, gt.intrinsics));
  }
  return {worst_centroid <= 0.2 && worst_focal <= 0.005,
          fmt("60 Hz flicker, 33 ms windows, %d scenarios: worst centroid offset %.3f px (<= 0.2), "
              "worst focal error %.3f%% (<= 0.5%%)",
              scenarios, worst_centroid, 100 * worst_focal)};
}

// 8. Spherical vs free6dof comparison table.
Outcome mode_comparison() {
  const auto dir = support::scratch("mode_comparison");
  std::ostringstream log, err;
  Scenario scenario;
  scenario.ground_truth = default_ground_truth(3, 8);
  scenario.duration_ms = 0.0;
  if (cmd_simulate(scenario, dir / "scenario", log, err) != 0) return {false, err.str()};
  std::vector<fs::path> reports;
  for (auto mode : {PoseMode::Spherical, PoseMode::Free6Dof}) {
    PipelineConfig c;
    c.correspondences = dir / "scenario" / "correspondences.csv";
    c.mode = mode;
    c.out_dir = dir / std::string(to_string(mode));
    if (cmd_calibrate(c, log, err) != 0) return {false, err.str()};
    reports.push_back(c.out_dir / "report.json");
  }
  const auto table = evaluate(reports, dir / "scenario" / "ground_truth.json");
  const std::string text = table.to_text();
  bool columns = table.methods.size() == 2 && table.methods[0].label == "spherical" &&
                 table.methods[1].label == "free6dof";
  std::size_t pos = 0;
  for (const char* row : {"fx", "fy", "cx", "cy", "k1", "k2", "reprojection error"}) {
    const auto found = text.find(std::string("\n") + row, pos);
    columns = columns && found != std::string::npos;
    pos = found;
  }
  const double es = table.methods[0].reprojection_error.value_or(1.0);
  const double ef = table.methods[1].reprojection_error.value_or(0.0);
  return {columns && es <= ef + 1e-9,
          fmt("table rows fx..k2 + reprojection error, columns spherical and free6dof: %s; mean "
              "reprojection spherical %.2e px <= free6dof %.2e px + 1e-9",
              columns ? "yes" : "no", es, ef)};
}

// 9. Byte-identical outputs of every command for a fixed seed.
Outcome determinism() {
  const auto dir = support::scratch("determinism");
  std::ostringstream log, err;
  std::vector<std::string> mismatched;
  int compared = 0;
  auto run_twice = [&](const std::string& name, const std::function<int(const fs::path&)>& cmd) {
    const fs::path a = dir / (name + "_a"), b = dir / (name + "_b");
    if (cmd(a) != 0 || cmd(b) != 0) {
      mismatched.push_back(name + " (failed)");
      return;
    }
    for (const auto& entry : fs::directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      ++compared;
      const auto other = b / entry.path().filename();
      if (!fs::exists(other) || support::slurp(entry.path()) != support::slurp(other)) {
        mismatched.push_back(name + "/" + entry.path().filename().string());
      }
    }
  };
  Scenario scenario;
  scenario.seed = 9;
  scenario.ground_truth = default_ground_truth(3, scenario.seed);
  scenario.noise.centroid_sigma = 0.1;
  scenario.noise.background_rate = 0.2;
  run_twice("simulate", [&](const fs::path& out) { return cmd_simulate(scenario, out, log, err); });
  const fs::path inputs = dir / "simulate_a";
  run_twice("accumulate", [&](const fs::path& out) {
    return cmd_accumulate(inputs / "events_view0.csv", EventFormat::Csv, 1280, 720, 10000,
                          AccumMode::Count, out, log, err);
  });
  const auto events_config = PipelineConfig::from_json(read_json(inputs / "calibrate_events.json"),
                                                       inputs);
  run_twice("detect", [&](const fs::path& out) {
    PipelineConfig c = events_config;
    c.out_dir = out;
    return cmd_detect(c, log, err);
  });
  run_twice("calibrate_events", [&](const fs::path& out) {
    PipelineConfig c = events_config;
    c.out_dir = out;
    return cmd_calibrate(c, log, err);
  });
  run_twice("calibrate_free", [&](const fs::path& out) {
    PipelineConfig c;
    c.correspondences = inputs / "correspondences.csv";
    c.mode = PoseMode::Free6Dof;
    c.out_dir = out;
    return cmd_calibrate(c, log, err);
  });
  run_twice("evaluate", [&](const fs::path& out) {
    return cmd_evaluate({dir / "calibrate_events_a" / "report.json",
                         dir / "calibrate_free_a" / "report.json"},
                        inputs / "ground_truth.json", out, log, err);
  });
  std::string detail = fmt("%d files from simulate, accumulate, detect, calibrate, evaluate "
                           "compared byte for byte",
                           compared);
  for (const auto& m : mismatched) detail += "; differs: " + m;
  return {mismatched.empty() && compared > 0, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*check)();
  };
  const Criterion criteria[] = {
      {1, "noiseless round-trip", noiseless_round_trip},
      {2, "two-view linear initialization", two_view_init},
      {3, "noise regime", noise_regime},
      {4, "Huber robustness", huber_robustness},
      {5, "spherical conic identity", conic_identity},
      {6, "Jacobian vs finite differences", jacobian_check},
      {7, "event pipeline", event_pipeline},
      {8, "mode comparison table", mode_comparison},
      {9, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] criterion %d, %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed,
              std::size(criteria));
  return failed == 0 ? 0 : 1;
}
