#include "mvbody/fitting.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace mvb {

namespace {

constexpr double kDampingCap = 1e8;

int body_dim(const BodyTemplate& t) { return 3 * (t.joint_count - 1) + t.shape_dim; }

VecX flatten_body(const BodyParams& p) {
  const Eigen::Index n = p.pose.rows();
  VecX q(3 * n + p.shape.size());
  for (Eigen::Index j = 0; j < n; ++j)
    for (int c = 0; c < 3; ++c) q[3 * j + c] = p.pose(j, c);
  q.tail(p.shape.size()) = p.shape;
  return q;
}

}  // namespace

std::vector<ViewFeature> pad_views(std::vector<ViewFeature> obs, int target_n) {
  require(!obs.empty(), "pad_views: empty observation list");
  require(target_n >= static_cast<int>(obs.size()),
          "pad_views: target below current view count");
  int next_id = 0;
  for (const auto& v : obs) next_id = std::max(next_id, v.view_id + 1);
  while (static_cast<int>(obs.size()) < target_n) {
    ViewFeature copy = obs.front();
    copy.view_id = next_id++;
    obs.push_back(std::move(copy));
  }
  return obs;
}

LossBreakdown step_loss(const BodyTemplate& t, const BodyParams& body,
                        const CameraParams& camera, const ViewFeature& feature,
                        const BodyParams* gt_params, const FitConfig& config) {
  const Points3 kp = keypoints3d(t, body);
  require(feature.joints2d.rows() == kp.rows(),
          "step_loss: observation keypoint count mismatch");
  const Points2 proj = project(camera, kp);

  LossBreakdown loss;
  int n_vis = 0;
  double abs_sum = 0;
  for (Eigen::Index j = 0; j < kp.rows(); ++j) {
    if (!feature.visibility[static_cast<std::size_t>(j)]) continue;
    ++n_vis;
    abs_sum += std::abs(proj(j, 0) - feature.joints2d(j, 0)) +
               std::abs(proj(j, 1) - feature.joints2d(j, 1));
  }
  if (n_vis > 0) loss.joints2d_l1 = abs_sum / (2.0 * n_vis);

  int n_3d = 0;
  if (feature.joints3d) {
    double sq_sum = 0;
    for (Eigen::Index j = 0; j < kp.rows(); ++j) {
      if (!feature.joints3d_mask[static_cast<std::size_t>(j)]) continue;
      ++n_3d;
      sq_sum += (kp.row(j) - feature.joints3d->row(j)).squaredNorm();
    }
    if (n_3d > 0) loss.joints3d_sq = sq_sum / n_3d;
  }

  if (gt_params) {
    const VecX diff = flatten_body(body) - flatten_body(*gt_params);
    loss.param_sq = diff.squaredNorm() / static_cast<double>(diff.size());
  }

  require(n_vis > 0 || n_3d > 0 || gt_params != nullptr,
          "step_loss: no constraints (all joints invisible, no 3D or "
          "parameter supervision)");

  loss.total = config.lambda2d * loss.joints2d_l1 +
               config.lambda3d * loss.joints3d_sq +
               config.lambda_smpl * loss.param_sq;
  return loss;
}

void apply_camera_delta(CameraParams& camera,
                        const Eigen::Matrix<double, 6, 1>& delta) {
  camera.scale *= std::exp(delta[0]);
  camera.rotation += delta.segment<3>(1);
  camera.translation += delta.segment<2>(4);
  camera.canonicalize_rotation();
}

void apply_body_delta(BodyParams& body, const VecX& delta) {
  const Eigen::Index n = body.pose.rows();
  require(delta.size() == 3 * n + body.shape.size(),
          "apply_body_delta: delta size mismatch");
  for (Eigen::Index j = 0; j < n; ++j)
    for (int c = 0; c < 3; ++c)
      body.pose(j, c) =
          std::clamp(body.pose(j, c) + delta[3 * j + c], -M_PI, M_PI);
  body.shape += delta.tail(body.shape.size());
}

namespace {

struct ResidualSystem {
  VecX r;   // weighted residuals; squared norm approximates the block loss
  MatX J;   // rows match r, columns: 6 camera then body parameters
};

// Weighted residuals and Jacobian for one view. The 2D rows carry IRLS
// Huber weights evaluated at the current residuals.
ResidualSystem build_system(const BodyTemplate& t, const BodyParams& body,
                            const CameraParams& camera,
                            const ViewFeature& feature,
                            const BodyParams* gt_params,
                            const FitConfig& config) {
  const int nb = body_dim(t);
  const Points3 joints = joints3d(t, body);
  const JointJacobians joint_jac = joints3d_jacobian(t, body);

  Points3 kp(kKeypointCount, 3);
  MatX kp_jac(3 * kKeypointCount, nb);
  for (int i = 0; i < kKeypointCount; ++i) {
    const int k = t.keypoint_map[i];
    kp.row(i) = joints.row(k);
    kp_jac.block(3 * i, 0, 3, 3 * (t.joint_count - 1)) =
        joint_jac.d_pose.block(3 * k, 0, 3, 3 * (t.joint_count - 1));
    kp_jac.block(3 * i, 3 * (t.joint_count - 1), 3, t.shape_dim) =
        joint_jac.d_shape.block(3 * k, 0, 3, t.shape_dim);
  }

  const Points2 proj = project(camera, kp);
  const ProjectionJacobian proj_jac = projection_jacobian(camera, kp);

  int n_vis = 0, n_3d = 0;
  for (int j = 0; j < kKeypointCount; ++j) {
    n_vis += feature.visibility[static_cast<std::size_t>(j)] ? 1 : 0;
    if (feature.joints3d)
      n_3d += feature.joints3d_mask[static_cast<std::size_t>(j)] ? 1 : 0;
  }

  const int rows = 2 * n_vis + 3 * n_3d + (gt_params ? nb : 0);
  ResidualSystem sys;
  sys.r = VecX::Zero(rows);
  sys.J = MatX::Zero(rows, 6 + nb);

  int row = 0;
  if (n_vis > 0) {
    const double base_w = config.lambda2d / (2.0 * n_vis);
    for (int j = 0; j < kKeypointCount; ++j) {
      if (!feature.visibility[static_cast<std::size_t>(j)]) continue;
      for (int c = 0; c < 2; ++c) {
        const double res = proj(j, c) - feature.joints2d(j, c);
        const double huber =
            std::min(1.0, config.huber_delta_px / std::max(std::abs(res), 1e-30));
        const double w = std::sqrt(base_w * huber);
        sys.r[row] = w * res;
        sys.J.block(row, 0, 1, 6) = w * proj_jac.d_camera.row(2 * j + c);
        sys.J.block(row, 6, 1, nb) =
            w * proj_jac.d_point.row(2 * j + c) * kp_jac.block(3 * j, 0, 3, nb);
        ++row;
      }
    }
  }
  if (n_3d > 0) {
    const double w = std::sqrt(config.lambda3d / n_3d);
    for (int j = 0; j < kKeypointCount; ++j) {
      if (!feature.joints3d_mask[static_cast<std::size_t>(j)]) continue;
      for (int c = 0; c < 3; ++c) {
        sys.r[row] = w * (kp(j, c) - (*feature.joints3d)(j, c));
        sys.J.block(row, 6, 1, nb) = w * kp_jac.row(3 * j + c);
        ++row;
      }
    }
  }
  if (gt_params) {
    const double w = std::sqrt(config.lambda_smpl / nb);
    const VecX diff = flatten_body(body) - flatten_body(*gt_params);
    for (int i = 0; i < nb; ++i) {
      sys.r[row] = w * diff[i];
      sys.J(row, 6 + i) = w;
      ++row;
    }
  }
  return sys;
}

}  // namespace

Correction corrector(const BodyTemplate& t, const ViewFeature& feature,
                     const CameraParams& camera, const BodyParams& body,
                     const BodyParams* gt_params, const FitConfig& config) {
  const int nb = body_dim(t);
  CameraParams cam = camera;
  BodyParams cur = body;
  double loss = step_loss(t, cur, cam, feature, gt_params, config).total;

  Correction corr;
  corr.d_body = VecX::Zero(nb);
  double damping = std::max(config.damping, 1e-12);
  double grad_backoff = 1.0;

  for (int iter = 0; iter < config.max_inner_iters; ++iter) {
    const ResidualSystem sys =
        build_system(t, cur, cam, feature, gt_params, config);
    const VecX g = sys.J.transpose() * sys.r;

    bool accepted = false;
    while (!accepted) {
      VecX step;
      if (config.corrector == CorrectorKind::gauss_newton) {
        MatX H = sys.J.transpose() * sys.J;
        VecX rhs = -g;
        const double max_diag = H.diagonal().maxCoeff();
        if (!(max_diag > 0)) break;  // no information in this block
        for (int i = 0; i < H.rows(); ++i) {
          if (H(i, i) <= 1e-12 * max_diag) {
            // Unobservable direction in this block: pin it to a zero step.
            H.row(i).setZero();
            H.col(i).setZero();
            H(i, i) = 1.0;
            rhs[i] = 0.0;
          } else {
            H(i, i) *= 1.0 + damping;
          }
        }
        step = H.ldlt().solve(rhs);
      } else {
        step = -(2.0 * config.gradient_lr / grad_backoff) * g;
      }
      if (!step.allFinite()) step.setZero();

      CameraParams cand_cam = cam;
      BodyParams cand_body = cur;
      apply_camera_delta(cand_cam, step.head<6>());
      apply_body_delta(cand_body, step.tail(nb));
      double cand_loss = std::numeric_limits<double>::infinity();
      try {
        cand_loss = step_loss(t, cand_body, cand_cam, feature, gt_params,
                              config).total;
      } catch (const std::exception&) {
        cand_loss = std::numeric_limits<double>::infinity();
      }

      if (std::isfinite(cand_loss) && cand_loss <= loss) {
        const double gain = loss - cand_loss;
        cam = cand_cam;
        cur = cand_body;
        loss = cand_loss;
        damping = std::max(damping * 0.1, 1e-12);
        accepted = true;
        corr.iters = iter + 1;
        if (gain <= config.convergence_tol) iter = config.max_inner_iters;
      } else {
        const bool capped = config.corrector == CorrectorKind::gauss_newton
                                ? damping >= kDampingCap
                                : grad_backoff >= kDampingCap;
        if (capped) {
          corr.damping_capped = true;
          break;
        }
        damping *= 10.0;
        grad_backoff *= 10.0;
      }
    }
    if (!accepted) break;
  }

  corr.d_camera[0] = std::log(cam.scale / camera.scale);
  corr.d_camera.segment<3>(1) = cam.rotation - camera.rotation;
  corr.d_camera.segment<2>(4) = cam.translation - camera.translation;
  corr.d_body = flatten_body(cur) - flatten_body(body);
  corr.final_camera = cam;
  corr.final_body = cur;
  return corr;
}

FitState init_state(const std::vector<ViewFeature>& obs, const BodyTemplate& t,
                    const FitConfig& config) {
  require(!obs.empty(), "init_state: empty observation list");
  (void)config;
  const int n = static_cast<int>(obs.size());

  FitState state;
  state.body = BodyParams::zero(t);
  const Points3 kp_rest = keypoints3d(t, state.body);

  std::vector<CameraParams> rig;
  if (n == 1 || n == 4) {
    rig = canonical_views(n);
  } else {
    rig.assign(static_cast<std::size_t>(n), CameraParams{});
  }

  for (int v = 0; v < n; ++v) {
    CameraParams cam = rig[static_cast<std::size_t>(v)];
    const Points2 proj = project(cam, kp_rest);  // scale 1, zero translation

    Vec2 mean_p = Vec2::Zero(), mean_o = Vec2::Zero();
    int n_vis = 0;
    for (int j = 0; j < kp_rest.rows(); ++j) {
      if (!obs[v].visibility[static_cast<std::size_t>(j)]) continue;
      mean_p += proj.row(j).transpose();
      mean_o += obs[v].joints2d.row(j).transpose();
      ++n_vis;
    }
    if (n_vis == 0) {
      state.flags.push_back("view " + std::to_string(v) +
                            ": no visible joints at init");
      state.cameras.push_back(cam);
      continue;
    }
    mean_p /= n_vis;
    mean_o /= n_vis;
    double num = 0, den = 0;
    for (int j = 0; j < kp_rest.rows(); ++j) {
      if (!obs[v].visibility[static_cast<std::size_t>(j)]) continue;
      const Vec2 dp = proj.row(j).transpose() - mean_p;
      const Vec2 doo = obs[v].joints2d.row(j).transpose() - mean_o;
      num += dp.dot(doo);
      den += dp.squaredNorm();
    }
    double scale = den > 1e-12 ? num / den : 0.0;
    if (!(scale > 1e-9)) {
      scale = 1.0;
      state.flags.push_back("view " + std::to_string(v) +
                            ": degenerate observation, scale init fell back to 1");
    }
    cam.scale = scale;
    cam.translation = mean_o - scale * mean_p;
    state.cameras.push_back(cam);
  }
  return state;
}

FitReport run_schedule(const std::vector<ViewFeature>& obs_in,
                       const BodyTemplate& t, const FitConfig& config,
                       const BodyParams* gt_params) {
  require(!obs_in.empty(), "run_schedule: empty observation list");
  require(config.stages >= 1, "run_schedule: stages must be positive");
  const auto t_start = std::chrono::steady_clock::now();

  const std::vector<ViewFeature> obs =
      static_cast<int>(obs_in.size()) < config.pad_to_views
          ? pad_views(obs_in, config.pad_to_views)
          : obs_in;
  const int n = static_cast<int>(obs.size());

  FitState state = init_state(obs, t, config);
  const int start =
      config.start_view.random
          ? static_cast<int>(mix_seed(config.start_view.seed, 0x5ca1eULL) %
                             static_cast<std::uint64_t>(n))
          : std::clamp(config.start_view.fixed_index, 0, n - 1);

  const auto mean_loss = [&]() {
    double sum = 0;
    for (int v = 0; v < n; ++v)
      sum += step_loss(t, state.body, state.cameras[v], obs[v], gt_params,
                       config).total;
    return sum / n;
  };

  FitReport report;
  double prev_stage_mean = mean_loss();
  for (int stage = 1; stage <= config.stages; ++stage) {
    for (int idx = 0; idx < n; ++idx) {
      const int view = (start + idx) % n;
      const double before =
          step_loss(t, state.body, state.cameras[view], obs[view], gt_params,
                    config).total;
      const Correction corr = corrector(t, obs[view], state.cameras[view],
                                        state.body, gt_params, config);
      state.cameras[view] = corr.final_camera;
      state.body = corr.final_body;
      const double after =
          step_loss(t, state.body, state.cameras[view], obs[view], gt_params,
                    config).total;
      state.stage_trace.push_back(BlockTrace{stage, view, before, after,
                                             corr.d_body.norm(),
                                             corr.d_camera.norm(),
                                             corr.damping_capped});
    }
    const double stage_mean = mean_loss();
    if (prev_stage_mean - stage_mean < config.convergence_tol)
      report.converged = true;
    prev_stage_mean = stage_mean;
  }

  for (int v = 0; v < n; ++v)
    report.per_view_final_losses.push_back(
        step_loss(t, state.body, state.cameras[v], obs[v], gt_params, config)
            .total);
  double sum = 0;
  for (double l : report.per_view_final_losses) sum += l;
  report.mean_final_loss = sum / n;
  report.state = std::move(state);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

std::vector<FitReport> fit_batch(
    const std::vector<MultiViewObservation>& instances, const BodyTemplate& t,
    const FitConfig& config, int jobs) {
  std::vector<FitReport> reports(instances.size());
  const auto worker_body = [&](int i) {
    reports[static_cast<std::size_t>(i)] =
        run_schedule(instances[static_cast<std::size_t>(i)], t, config);
    reports[static_cast<std::size_t>(i)].instance_id = i;
  };
  const int n = static_cast<int>(instances.size());
  const int workers = std::max(1, jobs);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) worker_body(i);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
            worker_body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  return reports;
}

}  // namespace mvb
