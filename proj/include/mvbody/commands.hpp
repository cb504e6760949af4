#pragma once

#include "mvbody/body_model.hpp"
#include "mvbody/fitting.hpp"
#include "mvbody/metrics.hpp"
#include "mvbody/synth.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mvb {

// Command implementations behind the CLI. Each returns a process exit code:
// 0 success, 1 verification failure; configuration and data problems throw
// config_error / io_error, which the CLI front end maps to exit codes 2 / 3.

struct GenOptions {
  SynthConfig synth;
  std::optional<std::filesystem::path> template_path;  // default: mini template
  MiniTemplateConfig mini;
  std::filesystem::path out_dir;
  int jobs = 1;
};
int cmd_gen(const GenOptions& options);

struct FitOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::string split = "test";  // test | train | all
  int views = 0;               // 0 = all available; else use the first N views
  FitConfig fit;
  int jobs = 1;
};
int cmd_fit(const FitOptions& options);

struct EvalOptions {
  std::filesystem::path data_dir;
  std::filesystem::path fits_dir;
  std::optional<std::filesystem::path> out_path;  // JSON report
  bool with_mesh = false;  // adds Hausdorff + tape measurements (slower)
};
int cmd_eval(const EvalOptions& options);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int draws = 100;
  double step = 1e-6;
  double tolerance = 1e-5;
  bool inject_fault = false;  // negative-control hook: corrupts one entry
  int vertex_target = 600;
};
int cmd_gradcheck(const GradcheckOptions& options);

struct ExportOptions {
  std::optional<std::filesystem::path> template_path;
  MiniTemplateConfig mini;
  std::optional<std::filesystem::path> report_path;  // fit report with params
  std::filesystem::path out_path;
};
int cmd_export(const ExportOptions& options);

/// Per-instance evaluation used by cmd_eval and tests: keypoint metrics of a
/// fitted body against ground truth, plus optional mesh metrics (Hausdorff
/// with the prediction re-posed into the ground-truth pose, and rest-pose
/// tape measurements).
MetricsReport evaluate_fit(const BodyTemplate& t, const BodyParams& fitted,
                           const GroundTruthInstance& gt, double epsilon_margin,
                           bool with_mesh);

/// Finite-difference verification of the analytic Jacobians (posed joints
/// and camera projection). Returns the worst relative error seen.
double gradcheck_worst_error(const BodyTemplate& t, std::uint64_t seed,
                             int draws, double step, bool inject_fault = false);

}  // namespace mvb
