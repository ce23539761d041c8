#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "colcal/event_io.hpp"
#include "colcal/features.hpp"
#include "colcal/refine.hpp"
#include "colcal/serialization.hpp"

namespace colcal {

namespace fs = std::filesystem;

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitInputError = 1, kExitNonConvergence = 2 };

struct PipelineConfig {
  std::vector<fs::path> event_files;  // one per view
  EventFormat event_format = EventFormat::Csv;
  std::optional<fs::path> correspondences;
  int sensor_width = 0;  // 0 = infer from the events
  int sensor_height = 0;
  TargetGeometry target;
  std::int64_t window_us = kDefaultWindowUs;
  AccumMode accum_mode = AccumMode::Count;
  DetectionParams detection;
  PoseMode mode = PoseMode::Spherical;
  LmOptions lm;
  fs::path out_dir = ".";

  /// Relative input paths are resolved against base_dir.
  static PipelineConfig from_json(const json& j, const fs::path& base_dir = {});
  /// Effective configuration, without the output directory.
  json to_json() const;
  void validate() const;
};

struct Scenario {
  GroundTruth ground_truth;
  NoiseModel noise;
  std::uint64_t seed = 1;
  double duration_ms = 33.0;
  EventFormat format = EventFormat::Csv;

  static Scenario from_json(const json& j, std::optional<std::uint64_t> seed_override = {});
  json to_json() const;
};

struct CalibrationRun {
  CalibrationReport report;
  std::vector<Correspondence> correspondences;
  std::vector<std::vector<MarkerPoint>> markers;  // empty for CSV input
  json initialization;
};

/// Event file of one view -> ordered correspondences (accumulate, detect,
/// order). The frame with the largest total count is used.
std::vector<Correspondence> extract_view(const EventStream& stream, const PipelineConfig& config,
                                         int view, std::vector<MarkerPoint>* markers = nullptr);

/// Homographies, linear initialization for the configured mode, refinement.
/// NonConvergenceError propagates.
CalibrationRun calibrate_correspondences(std::vector<Correspondence> pairs,
                                         const PipelineConfig& config);

/// Loads inputs per the config and runs calibrate_correspondences.
CalibrationRun run_calibration(const PipelineConfig& config);

json report_json(const CalibrationRun& run, const PipelineConfig& config);

struct EvaluationColumn {
  std::string label;
  Intrinsics intrinsics;
  Distortion distortion;
  std::optional<double> reprojection_error;
};

struct EvaluationTable {
  EvaluationColumn ground_truth;
  std::vector<EvaluationColumn> methods;

  std::string to_text() const;
  std::string to_csv() const;
};

/// Compares reports (or ground-truth files) against a ground truth in the
/// parameter order fx, fy, cx, cy, k1, k2, reprojection error.
EvaluationTable evaluate(const std::vector<fs::path>& reports, const fs::path& ground_truth);

// Command entry points; each returns an exit code and reports errors on err.
int cmd_simulate(const Scenario& scenario, const fs::path& out_dir, std::ostream& log,
                 std::ostream& err);
// width/height of 0 infer the sensor size from the events.
int cmd_accumulate(const fs::path& events, EventFormat format, int width, int height,
                   std::int64_t window_us, AccumMode mode, const fs::path& out_dir,
                   std::ostream& log, std::ostream& err);
int cmd_detect(const PipelineConfig& config, std::ostream& log, std::ostream& err);
int cmd_calibrate(const PipelineConfig& config, std::ostream& log, std::ostream& err);
int cmd_evaluate(const std::vector<fs::path>& reports, const fs::path& ground_truth,
                 const std::optional<fs::path>& out_dir, std::ostream& log, std::ostream& err);

}  // namespace colcal
