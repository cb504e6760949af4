#include "mvbody/commands.hpp"

#include "mvbody/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <thread>

namespace mvb {

namespace {

std::string fit_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fit_%06d.json", id);
  return buf;
}

std::vector<int> split_ids(const Dataset& d, const std::string& split) {
  if (split == "train") return d.train_ids;
  if (split == "test") return d.test_ids;
  if (split == "all") {
    std::vector<int> ids = d.train_ids;
    ids.insert(ids.end(), d.test_ids.begin(), d.test_ids.end());
    std::sort(ids.begin(), ids.end());
    return ids;
  }
  throw config_error("fit: unknown split '" + split + "' (use test|train|all)");
}

BodyTemplate resolve_template(const std::optional<std::filesystem::path>& path,
                              const MiniTemplateConfig& mini) {
  return path ? load_template(*path) : make_mini_template(mini);
}

}  // namespace

int cmd_gen(const GenOptions& options) {
  const BodyTemplate t = resolve_template(options.template_path, options.mini);
  generate_dataset(t, options.synth, options.out_dir, options.jobs);
  const int n = options.synth.n_shapes * options.synth.poses_per_shape;
  std::cout << "gen: wrote " << n << " instances ("
            << options.synth.n_shapes << " shapes x "
            << options.synth.poses_per_shape << " poses, "
            << options.synth.n_views << " views) to " << options.out_dir.string()
            << "\n";
  return 0;
}

int cmd_fit(const FitOptions& options) {
  const Dataset dataset = open_dataset(options.data_dir);
  const std::vector<int> ids = split_ids(dataset, options.split);
  require_data(!ids.empty(), "fit: selected split is empty");
  std::filesystem::create_directories(options.out_dir);

  const int n = static_cast<int>(ids.size());
  std::vector<FitReport> reports(static_cast<std::size_t>(n));
  const auto worker_body = [&](int i) {
    const DatasetInstance inst = load_instance(dataset, ids[static_cast<std::size_t>(i)]);
    MultiViewObservation obs = inst.observation;
    if (options.views > 0) {
      require(options.views <= static_cast<int>(obs.size()),
              "fit: --views exceeds the views stored in the dataset");
      obs.resize(static_cast<std::size_t>(options.views));
    }
    FitReport report = run_schedule(obs, dataset.body_template, options.fit);
    report.instance_id = ids[static_cast<std::size_t>(i)];
    reports[static_cast<std::size_t>(i)] = std::move(report);
  };

  const int workers = std::max(1, options.jobs);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) worker_body(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          worker_body(i);
      });
    for (auto& th : pool) th.join();
  }

  double mean_loss = 0;
  for (const auto& r : reports) {
    write_file_atomic(options.out_dir / fit_file_name(r.instance_id),
                      to_json(r).dump(1) + "\n");
    mean_loss += r.mean_final_loss;
  }
  mean_loss /= n;

  nlohmann::json summary;
  summary["data_dir"] = options.data_dir.string();
  summary["split"] = options.split;
  summary["views"] = options.views;
  summary["instance_ids"] = ids;
  summary["fit_config"] = to_json(options.fit);
  summary["mean_final_loss"] = mean_loss;
  write_file_atomic(options.out_dir / "summary.json", summary.dump(1) + "\n");

  std::cout << "fit: " << n << " instances, mean final loss " << mean_loss
            << ", reports in " << options.out_dir.string() << "\n";
  return 0;
}

MetricsReport evaluate_fit(const BodyTemplate& t, const BodyParams& fitted,
                           const GroundTruthInstance& gt, double epsilon_margin,
                           bool with_mesh) {
  Points3 gt_kp(kKeypointCount, 3);
  for (int i = 0; i < kKeypointCount; ++i)
    gt_kp.row(i) = gt.joints3d_gt.row(t.keypoint_map[i]);
  const Points3 pred_kp = keypoints3d(t, fitted);

  MetricsReport report;
  report.mpjpe_mm = mpjpe_mm(pred_kp, gt_kp);
  const Points3 aligned = procrustes_align(pred_kp, gt_kp).aligned;
  report.pa_mpjpe_mm = mpjpe_mm(aligned, gt_kp);
  const auto errors = per_joint_errors_mm(aligned, gt_kp);
  report.pck_at_150mm = pck(errors, 150.0);
  report.auc_0_150 = auc(errors);

  if (with_mesh) {
    // Shape comparison in the ground-truth pose, so pose errors do not
    // confound the surface distance.
    BodyParams reposed = fitted;
    reposed.pose = gt.body.pose;
    const Mesh pred_mesh =
        resolve_penetration(skin(t, reposed), posed_capsules(t, reposed),
                            own_bone_exclusions(t), epsilon_margin);
    report.hausdorff_mm =
        hausdorff(pred_mesh.vertices, gt.mesh_gt.vertices) * 1000.0;

    BodyParams pred_rest = fitted;
    pred_rest.pose.setZero();
    BodyParams gt_rest = gt.body;
    gt_rest.pose.setZero();
    const TapeMeasurements pred_tape =
        tape_measurements(skin(t, pred_rest), t);
    const TapeMeasurements gt_tape = tape_measurements(skin(t, gt_rest), t);
    report.measurements = pred_tape;
    report.measurement_rel_errors = relative_errors(pred_tape, gt_tape);
  }
  return report;
}

int cmd_eval(const EvalOptions& options) {
  const Dataset dataset = open_dataset(options.data_dir);
  nlohmann::json summary_json;
  try {
    summary_json =
        nlohmann::json::parse(read_file(options.fits_dir / "summary.json"));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("eval: cannot parse fit summary: " + std::string(e.what()));
  }
  const auto ids = summary_json.at("instance_ids").get<std::vector<int>>();
  require_data(!ids.empty(), "eval: fit summary lists no instances");

  std::vector<MetricsReport> rows;
  for (int id : ids) {
    const auto report_json = nlohmann::json::parse(
        read_file(options.fits_dir / fit_file_name(id)));
    const FitReport fit = fit_report_from_json(report_json);
    const DatasetInstance inst = load_instance(dataset, id);
    rows.push_back(evaluate_fit(dataset.body_template, fit.state.body, inst.gt,
                                dataset.config.epsilon_margin_m,
                                options.with_mesh));
  }

  MetricsReport mean;
  for (const auto& r : rows) {
    mean.mpjpe_mm += r.mpjpe_mm;
    mean.pa_mpjpe_mm += r.pa_mpjpe_mm;
    mean.pck_at_150mm += r.pck_at_150mm;
    mean.auc_0_150 += r.auc_0_150;
    if (r.hausdorff_mm)
      mean.hausdorff_mm = mean.hausdorff_mm.value_or(0.0) + *r.hausdorff_mm;
  }
  const double n = static_cast<double>(rows.size());
  mean.mpjpe_mm /= n;
  mean.pa_mpjpe_mm /= n;
  mean.pck_at_150mm /= n;
  mean.auc_0_150 /= n;
  if (mean.hausdorff_mm) *mean.hausdorff_mm /= n;
  double mean_tape = 0;
  int tape_rows = 0;
  for (const auto& r : rows)
    if (r.measurement_rel_errors) {
      mean_tape += r.measurement_rel_errors->mean_percent;
      ++tape_rows;
    }

  std::printf("%10s %10s %12s %8s %8s %8s %10s\n", "instance", "mpjpe_mm",
              "pa_mpjpe_mm", "pck@150", "auc", "hd_mm", "tape_err%%");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::printf("%10d %10.3f %12.3f %8.3f %8.3f", ids[i], r.mpjpe_mm,
                r.pa_mpjpe_mm, r.pck_at_150mm, r.auc_0_150);
    if (r.hausdorff_mm)
      std::printf(" %8.3f", *r.hausdorff_mm);
    else
      std::printf(" %8s", "-");
    if (r.measurement_rel_errors)
      std::printf(" %10.3f", r.measurement_rel_errors->mean_percent);
    else
      std::printf(" %10s", "-");
    std::printf("\n");
  }
  std::printf("%10s %10.3f %12.3f %8.3f %8.3f", "mean", mean.mpjpe_mm,
              mean.pa_mpjpe_mm, mean.pck_at_150mm, mean.auc_0_150);
  if (mean.hausdorff_mm)
    std::printf(" %8.3f", *mean.hausdorff_mm);
  else
    std::printf(" %8s", "-");
  if (tape_rows > 0)
    std::printf(" %10.3f", mean_tape / tape_rows);
  else
    std::printf(" %10s", "-");
  std::printf("\n");

  if (options.out_path) {
    nlohmann::json out;
    nlohmann::json per_instance = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      nlohmann::json row = to_json(rows[i]);
      row["instance_id"] = ids[i];
      per_instance.push_back(std::move(row));
    }
    out["per_instance"] = std::move(per_instance);
    out["mean"] = to_json(mean);
    write_file_atomic(*options.out_path, out.dump(1) + "\n");
  }
  return 0;
}

double gradcheck_worst_error(const BodyTemplate& t, std::uint64_t seed,
                             int draws, double step, bool inject_fault) {
  Rng rng(seed);
  double worst = 0;
  const auto rel = [](double a, double n) {
    return std::abs(a - n) / std::max(1.0, std::abs(a) + std::abs(n));
  };

  for (int draw = 0; draw < draws; ++draw) {
    BodyParams p = BodyParams::zero(t);
    for (Eigen::Index j = 0; j < p.pose.rows(); ++j)
      for (int c = 0; c < 3; ++c) p.pose(j, c) = rng.uniform(-0.8, 0.8);
    for (Eigen::Index b = 0; b < p.shape.size(); ++b)
      p.shape[b] = rng.uniform(-2.0, 2.0);

    JointJacobians jac = joints3d_jacobian(t, p);
    if (inject_fault && draw == 0) jac.d_pose(0, 0) += 1e-2;

    const int nb = 3 * (t.joint_count - 1);
    for (int i = 0; i < nb + t.shape_dim; ++i) {
      BodyParams lo = p, hi = p;
      if (i < nb) {
        lo.pose(i / 3, i % 3) -= step;
        hi.pose(i / 3, i % 3) += step;
      } else {
        lo.shape[i - nb] -= step;
        hi.shape[i - nb] += step;
      }
      const Points3 jlo = joints3d(t, lo), jhi = joints3d(t, hi);
      for (int k = 0; k < t.joint_count; ++k)
        for (int c = 0; c < 3; ++c) {
          const double fd = (jhi(k, c) - jlo(k, c)) / (2.0 * step);
          const double an = i < nb ? jac.d_pose(3 * k + c, i)
                                   : jac.d_shape(3 * k + c, i - nb);
          worst = std::max(worst, rel(an, fd));
        }
    }

    // Camera projection Jacobian on a batch of random points.
    CameraParams cam;
    cam.scale = std::exp(rng.uniform(-1.0, 1.0));
    cam.rotation = Vec3(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                        rng.uniform(-2.0, 2.0));
    CameraParams canonical = cam;
    canonical.canonicalize_rotation();
    cam = canonical;
    cam.translation = Vec2(rng.uniform(-50, 50), rng.uniform(-50, 50));
    Points3 pts(5, 3);
    for (int i = 0; i < 5; ++i)
      pts.row(i) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                        rng.uniform(-1, 1)).transpose();
    const ProjectionJacobian pj = projection_jacobian(cam, pts);
    for (int col = 0; col < 6; ++col) {
      CameraParams lo = cam, hi = cam;
      if (col == 0) {
        lo.scale = cam.scale * std::exp(-step);
        hi.scale = cam.scale * std::exp(step);
      } else if (col <= 3) {
        lo.rotation[col - 1] -= step;
        hi.rotation[col - 1] += step;
      } else {
        lo.translation[col - 4] -= step;
        hi.translation[col - 4] += step;
      }
      const Points2 plo = project(lo, pts), phi = project(hi, pts);
      for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 2; ++c) {
          const double fd = (phi(i, c) - plo(i, c)) / (2.0 * step);
          worst = std::max(worst, rel(pj.d_camera(2 * i + c, col), fd));
        }
    }
    for (int i = 0; i < 5; ++i)
      for (int axis = 0; axis < 3; ++axis) {
        Points3 lo = pts, hi = pts;
        lo(i, axis) -= step;
        hi(i, axis) += step;
        const Points2 plo = project(cam, lo), phi = project(cam, hi);
        for (int c = 0; c < 2; ++c) {
          const double fd = (phi(i, c) - plo(i, c)) / (2.0 * step);
          worst = std::max(worst, rel(pj.d_point(2 * i + c, axis), fd));
        }
      }
  }
  return worst;
}

int cmd_gradcheck(const GradcheckOptions& options) {
  MiniTemplateConfig mini;
  mini.vertex_target = options.vertex_target;
  const BodyTemplate t = make_mini_template(mini);
  const double worst = gradcheck_worst_error(t, options.seed, options.draws,
                                             options.step, options.inject_fault);
  const bool ok = worst < options.tolerance;
  std::cout << "gradcheck: " << options.draws
            << " draws, worst relative error " << worst << " (tolerance "
            << options.tolerance << ") -> " << (ok ? "pass" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_export(const ExportOptions& options) {
  const BodyTemplate t = resolve_template(options.template_path, options.mini);
  BodyParams params = BodyParams::zero(t);
  if (options.report_path) {
    const auto j = nlohmann::json::parse(read_file(*options.report_path));
    try {
      params = body_params_from_json(j.contains("body") ? j.at("body") : j);
    } catch (const nlohmann::json::exception& e) {
      throw io_error("export: cannot read body parameters: " +
                     std::string(e.what()));
    }
    require_data(params.pose.rows() == t.joint_count - 1 &&
                     params.shape.size() == t.shape_dim,
                 "export: parameter dimensions do not match the template");
  }
  save_mesh_obj(skin(t, params), options.out_path);
  std::cout << "export: wrote " << t.vertex_count << " vertices to "
            << options.out_path.string() << "\n";
  return 0;
}

}  // namespace mvb
