#pragma once

#include "mvbody/body_model.hpp"
#include "mvbody/camera.hpp"
#include "mvbody/common.hpp"
#include "mvbody/observation.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mvb {

enum class CorrectorKind { gauss_newton, gradient };

/// Which view opens each stage's chain.
struct StartView {
  bool random = true;  // pick from seed; otherwise use fixed_index
  int fixed_index = 0;
  std::uint64_t seed = 0;
};

struct FitConfig {
  int stages = 3;
  double lambda2d = 1.0;     // per pixel
  double lambda3d = 100.0;   // per squared meter
  double lambda_smpl = 1.0;  // parameter supervision weight
  CorrectorKind corrector = CorrectorKind::gauss_newton;
  double damping = 1e-4;           // initial Levenberg-Marquardt damping
  double huber_delta_px = 1.0;     // 2D robustifier width inside the corrector
  int max_inner_iters = 30;        // per block visit
  StartView start_view;
  double convergence_tol = 1e-10;  // on mean loss decrease per stage
  double gradient_lr = 1e-2;       // step size for the gradient corrector
  int pad_to_views = 4;            // inputs below this are padded by copying
};

/// One corrective block visit in the schedule trace.
struct BlockTrace {
  int stage = 0;
  int view = 0;
  double loss_before = 0;
  double loss_after = 0;
  double d_body_norm = 0;
  double d_camera_norm = 0;
  bool damping_capped = false;
};

/// Shared body parameters plus one camera per view. Exactly one body
/// parameter set exists regardless of the view count.
struct FitState {
  BodyParams body;
  std::vector<CameraParams> cameras;
  std::vector<BlockTrace> stage_trace;
  std::vector<std::string> flags;
};

struct FitReport {
  FitState state;
  std::vector<double> per_view_final_losses;
  double mean_final_loss = 0;
  bool converged = false;
  double wall_time_s = 0;
  int instance_id = -1;
};

struct LossBreakdown {
  double total = 0;
  double joints2d_l1 = 0;    // mean |residual| per visible coordinate, pixels
  double joints3d_sq = 0;    // mean squared joint distance, m^2
  double param_sq = 0;       // mean squared parameter difference
};

/// Appends copies of the first view until the list has target_n entries.
/// Copies share the observation data but get fresh view ids (each padded
/// view still receives its own camera during fitting).
std::vector<ViewFeature> pad_views(std::vector<ViewFeature> obs, int target_n);

/// Composite per-block loss: lambda2d * L1(2D) + lambda3d * L2(3D)
/// + lambda_smpl * L2(params), the latter two only when supplied.
/// Throws if no visible joints and no 3D or parameter supervision exist.
LossBreakdown step_loss(const BodyTemplate& t, const BodyParams& body,
                        const CameraParams& camera, const ViewFeature& feature,
                        const BodyParams* gt_params, const FitConfig& config);

/// Corrective update for one block. Camera deltas live in the optimizer
/// chart (d log s, d rotation, d translation).
struct Correction {
  Eigen::Matrix<double, 6, 1> d_camera = Eigen::Matrix<double, 6, 1>::Zero();
  VecX d_body;  // 3(K-1) pose entries then B shape entries
  CameraParams final_camera;  // camera with d_camera applied
  BodyParams final_body;      // body with d_body applied
  bool damping_capped = false;
  int iters = 0;
};

/// Computes the block correction for one view: iterated damped Gauss-Newton
/// steps on the view residual (Huber-smoothed 2D), or scaled gradient steps.
/// A step that does not reduce the exact block loss is retried with 10x
/// damping; at the cap (1e8) the remaining correction is zero. Never throws
/// on singular systems.
Correction corrector(const BodyTemplate& t, const ViewFeature& feature,
                     const CameraParams& camera, const BodyParams& body,
                     const BodyParams* gt_params, const FitConfig& config);

/// Applies a camera-chart delta (log-scale, rotation, translation) and
/// canonicalizes the rotation.
void apply_camera_delta(CameraParams& camera,
                        const Eigen::Matrix<double, 6, 1>& delta);

/// Applies a body delta and clamps each pose entry to [-pi, pi].
void apply_body_delta(BodyParams& body, const VecX& delta);

/// Initial guesses: zero body, per-view canonical yaw (view counts 1 and 4)
/// or identity rotation, and closed-form orthographic scale/translation
/// alignment of the rest-pose keypoints to the observed 2D joints.
FitState init_state(const std::vector<ViewFeature>& obs, const BodyTemplate& t,
                    const FitConfig& config);

/// The multi-view multi-stage corrective schedule. Fewer than pad_to_views
/// observations are padded first; more simply extend the chain. Within each
/// stage, views run in chain order from the start view; body corrections
/// flow block to block through the whole chain (crossing stage boundaries),
/// camera corrections flow stage to stage within their view. The report
/// averages per-view losses at the final parameters.
FitReport run_schedule(const std::vector<ViewFeature>& obs,
                       const BodyTemplate& t, const FitConfig& config,
                       const BodyParams* gt_params = nullptr);

/// Batch fitting over independent instances, `jobs` at a time; results are
/// ordered by instance index regardless of completion order.
std::vector<FitReport> fit_batch(
    const std::vector<MultiViewObservation>& instances, const BodyTemplate& t,
    const FitConfig& config, int jobs = 1);

}  // namespace mvb
