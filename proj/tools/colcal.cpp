// colcal command-line tool: simulate, accumulate, detect, calibrate, evaluate.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "colcal/error.hpp"
#include "colcal/pipeline.hpp"

namespace {

using namespace colcal;

struct Overrides {
  std::string config;
  std::vector<std::string> events;
  std::string correspondences;
  std::string format;
  std::string mode;
  std::string accumulation;
  std::int64_t window_us = 0;
  double huber_delta = 0.0;
  int max_iterations = 0;
  std::string out;
};

void add_pipeline_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--events", o.events, "Event file, one per view");
  cmd->add_option("--format", o.format, "Event file format")
      ->check(CLI::IsMember({"csv", "binary"}));
  cmd->add_option("--window-us", o.window_us, "Accumulation window in microseconds");
  cmd->add_option("--accumulation", o.accumulation, "Accumulation mode")
      ->check(CLI::IsMember({"count", "polarity_balance"}));
  cmd->add_option("--out", o.out, "Output directory");
}

PipelineConfig load_config(const Overrides& o) {
  PipelineConfig c;
  if (!o.config.empty()) {
    const fs::path path(o.config);
    c = PipelineConfig::from_json(read_json(path), path.parent_path());
  }
  if (!o.events.empty()) {
    c.event_files.clear();
    for (const auto& e : o.events) c.event_files.emplace_back(e);
    c.correspondences.reset();
  }
  if (!o.correspondences.empty()) {
    c.correspondences = fs::path(o.correspondences);
    c.event_files.clear();
  }
  if (!o.format.empty()) c.event_format = parse_event_format(o.format);
  if (!o.mode.empty()) c.mode = parse_pose_mode(o.mode);
  if (!o.accumulation.empty()) c.accum_mode = parse_accum_mode(o.accumulation);
  if (o.window_us != 0) c.window_us = o.window_us;
  if (o.huber_delta != 0.0) c.lm.huber_delta = o.huber_delta;
  if (o.max_iterations != 0) c.lm.max_iterations = o.max_iterations;
  if (!o.out.empty()) c.out_dir = o.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera calibration through a collimator"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config, sim_out = "scenario", sim_format;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_views;
  std::optional<double> sim_duration;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scenario");
  simulate->add_option("--config", sim_config, "Scenario config (JSON)")->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim_seed, "Random seed");
  simulate->add_option("--views", sim_views, "Number of views");
  simulate->add_option("--duration-ms", sim_duration, "Event recording length per view");
  simulate->add_option("--format", sim_format, "Event file format")
      ->check(CLI::IsMember({"csv", "binary"}));
  simulate->add_option("--out", sim_out, "Output directory");

  // accumulate
  std::string acc_events, acc_format = "csv", acc_mode = "count", acc_out = "frames";
  std::int64_t acc_window = kDefaultWindowUs;
  int acc_width = 0, acc_height = 0;
  auto* accumulate_cmd = app.add_subcommand("accumulate", "Accumulate events into frames");
  accumulate_cmd->add_option("--events", acc_events, "Event file")->required();
  accumulate_cmd->add_option("--format", acc_format, "Event file format")
      ->check(CLI::IsMember({"csv", "binary"}));
  accumulate_cmd->add_option("--width", acc_width, "Sensor width (0 = infer)");
  accumulate_cmd->add_option("--height", acc_height, "Sensor height (0 = infer)");
  accumulate_cmd->add_option("--window-us", acc_window, "Window length in microseconds");
  accumulate_cmd->add_option("--accumulation", acc_mode, "Accumulation mode")
      ->check(CLI::IsMember({"count", "polarity_balance"}));
  accumulate_cmd->add_option("--out", acc_out, "Output directory");

  // detect
  Overrides det;
  auto* detect = app.add_subcommand("detect", "Detect and order markers in event views");
  add_pipeline_flags(detect, det);

  // calibrate
  Overrides cal;
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate from events or correspondences");
  add_pipeline_flags(calibrate, cal);
  calibrate->add_option("--correspondences", cal.correspondences, "Correspondence CSV");
  calibrate->add_option("--mode", cal.mode, "Pose model")
      ->check(CLI::IsMember({"spherical", "free6dof"}));
  calibrate->add_option("--huber-delta", cal.huber_delta, "Huber threshold in pixels")
      ->check(CLI::PositiveNumber);
  calibrate->add_option("--max-iterations", cal.max_iterations, "LM iteration cap")
      ->check(CLI::PositiveNumber);

  // evaluate
  std::vector<std::string> ev_reports;
  std::string ev_truth, ev_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare reports with ground truth");
  evaluate_cmd->add_option("--report", ev_reports, "Calibration report (repeatable)")->required();
  evaluate_cmd->add_option("--ground-truth", ev_truth, "Ground-truth JSON")->required();
  evaluate_cmd->add_option("--out", ev_out, "Directory for evaluation.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (simulate->parsed()) {
      json j = json::object();
      if (!sim_config.empty()) j = read_json(sim_config);
      if (sim_views) j["views"] = *sim_views;
      if (sim_duration) j["duration_ms"] = *sim_duration;
      if (!sim_format.empty()) j["format"] = sim_format;
      const auto scenario = Scenario::from_json(j, sim_seed);
      return cmd_simulate(scenario, sim_out, std::cout, std::cerr);
    }
    if (accumulate_cmd->parsed()) {
      return cmd_accumulate(acc_events, parse_event_format(acc_format), acc_width, acc_height,
                            acc_window, parse_accum_mode(acc_mode), acc_out, std::cout,
                            std::cerr);
    }
    if (detect->parsed()) return cmd_detect(load_config(det), std::cout, std::cerr);
    if (calibrate->parsed()) return cmd_calibrate(load_config(cal), std::cout, std::cerr);
    if (evaluate_cmd->parsed()) {
      std::vector<fs::path> reports(ev_reports.begin(), ev_reports.end());
      std::optional<fs::path> out;
      if (!ev_out.empty()) out = fs::path(ev_out);
      return cmd_evaluate(reports, ev_truth, out, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}
