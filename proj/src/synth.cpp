#include "mvbody/synth.hpp"

#include "mvbody/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace mvb {

namespace {

Vec3 closest_segment_point(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + t * ab;
}

Vec3 any_perpendicular(const Vec3& d) {
  const Vec3 axis = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 u = d.cross(axis);
  const double n = u.norm();
  return n > 0 ? Vec3(u / n) : Vec3::UnitX();
}

}  // namespace

void SynthConfig::validate() const {
  if (n_shapes < 1) throw config_error("synth: n_shapes must be positive");
  if (poses_per_shape < 1)
    throw config_error("synth: poses_per_shape must be positive");
  if (n_views < 1) throw config_error("synth: n_views must be positive");
  if (noise_sigma_px < 0) throw config_error("synth: noise_sigma_px must be >= 0");
  if (occlusion_rate < 0 || occlusion_rate > 1)
    throw config_error("synth: occlusion_rate must lie in [0, 1]");
  if (split_fraction < 0 || split_fraction > 1)
    throw config_error("synth: split_fraction must lie in [0, 1]");
  if (epsilon_margin_m < 0) throw config_error("synth: epsilon_margin must be >= 0");
  if (max_pose_angle_rad < 0)
    throw config_error("synth: max_pose_angle must be >= 0");
  if (base_scale_px_per_m <= 0)
    throw config_error("synth: base_scale_px_per_m must be positive");
  if (scale_jitter_lo <= 0 || scale_jitter_hi < scale_jitter_lo)
    throw config_error("synth: bad scale jitter range");
  if (min_visible_per_view < 1)
    throw config_error("synth: min_visible_per_view must be positive");
}

VecX sample_shape(Rng& rng, const ShapeStats& stats) {
  require(stats.mean.size() == stats.stddev.size(),
          "sample_shape: mean/stddev size mismatch");
  require((stats.stddev.array() > 0).all(),
          "sample_shape: stddev must be positive");
  VecX shape(stats.mean.size());
  for (Eigen::Index b = 0; b < shape.size(); ++b)
    shape[b] = rng.uniform(stats.mean[b] - 3.0 * stats.stddev[b],
                           stats.mean[b] + 3.0 * stats.stddev[b]);
  return shape;
}

namespace {

std::vector<Points3> load_pose_file(const std::filesystem::path& path,
                                    int pose_joints) {
  std::ifstream is(path);
  require_data(is.good(), "pose file: cannot open: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("pose file: parse error: " + std::string(e.what()));
  }
  require_data(j.contains("frames") && j["frames"].is_array() &&
                   !j["frames"].empty(),
               "pose file: missing nonempty 'frames' array");
  std::vector<Points3> frames;
  for (const auto& f : j["frames"]) {
    Points3 pose = points3_from_json(f, "pose frame");
    require_data(pose.rows() == pose_joints,
                 "pose file: frame has wrong joint count");
    frames.push_back(std::move(pose));
  }
  return frames;
}

}  // namespace

Points3 sample_pose(Rng& rng, const BodyTemplate& t, const SynthConfig& config,
                    int frame_index) {
  const int n = t.joint_count - 1;
  if (config.pose_file) {
    const auto frames = load_pose_file(*config.pose_file, n);
    return frames[static_cast<std::size_t>(frame_index) % frames.size()];
  }
  Points3 pose(n, 3);
  const double a = config.max_pose_angle_rad;
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < 3; ++c) pose(j, c) = rng.uniform(-a, a);
  return pose;
}

std::vector<Capsule> posed_capsules(const BodyTemplate& t,
                                    const BodyParams& params) {
  const Points3 joints = joints3d(t, params);
  std::vector<Capsule> capsules(t.joint_count - 1);
  for (int b = 0; b + 1 < t.joint_count; ++b) {
    capsules[b] = Capsule{joints.row(t.parent[b + 1]).transpose(),
                          joints.row(b + 1).transpose(),
                          t.bone_capsule_radii[b]};
  }
  return capsules;
}

std::vector<std::vector<int>> own_bone_exclusions(const BodyTemplate& t) {
  std::vector<std::vector<int>> exclusions(t.vertex_count);
  for (int v = 0; v < t.vertex_count; ++v) {
    int top1 = -1, top2 = -1;
    for (int k = 0; k < t.joint_count; ++k) {
      const double w = t.skinning_weights(v, k);
      if (w <= 0) continue;
      if (top1 < 0 || w > t.skinning_weights(v, top1)) {
        top2 = top1;
        top1 = k;
      } else if (top2 < 0 || w > t.skinning_weights(v, top2)) {
        top2 = k;
      }
    }
    for (int b = 0; b + 1 < t.joint_count; ++b) {
      const int driver = t.parent[b + 1];
      if (driver == top1 || driver == top2) exclusions[v].push_back(b);
    }
  }
  return exclusions;
}

Mesh resolve_penetration(const Mesh& mesh, const std::vector<Capsule>& capsules,
                         const std::vector<std::vector<int>>& exclusions,
                         double epsilon, PenetrationReport* report,
                         int max_sweeps) {
  require(static_cast<int>(exclusions.size()) == mesh.vertices.rows(),
          "resolve_penetration: exclusion map size mismatch");
  Mesh out{mesh.vertices, mesh.faces};
  const Eigen::Index V = out.vertices.rows();
  const int n_caps = static_cast<int>(capsules.size());

  auto is_excluded = [&](Eigen::Index v, int b) {
    const auto& ex = exclusions[static_cast<std::size_t>(v)];
    return std::find(ex.begin(), ex.end(), b) != ex.end();
  };

  int sweeps = 0;
  bool converged = false;
  for (; sweeps < max_sweeps; ++sweeps) {
    // The first sweep projects exactly (minimal displacement on isolated
    // contacts). Later sweeps only run when a vertex sits in a wedge of
    // overlapping capsules, where pure alternating projection can stall;
    // a slowly growing overshoot forces termination there.
    const double slack =
        sweeps == 0 ? 0.0
                    : std::min(1e-4, 1e-9 * std::pow(2.0, sweeps - 1));
    int moved = 0;
    for (Eigen::Index v = 0; v < V; ++v) {
      Vec3 p = out.vertices.row(v).transpose();
      bool touched = false;
      for (int b = 0; b < n_caps; ++b) {
        if (is_excluded(v, b)) continue;
        const double need = capsules[b].radius + epsilon;
        const Vec3 axis_pt = closest_segment_point(p, capsules[b].a, capsules[b].b);
        const Vec3 delta = p - axis_pt;
        const double dist = delta.norm();
        if (dist >= need - 1e-12) continue;
        const Vec3 dir = dist > 1e-15
                             ? Vec3(delta / dist)
                             : any_perpendicular(capsules[b].b - capsules[b].a);
        p = axis_pt + (need + slack) * dir;
        touched = true;
      }
      if (touched) {
        out.vertices.row(v) = p.transpose();
        ++moved;
      }
    }
    if (moved == 0) {
      converged = true;
      break;
    }
  }

  if (!converged) {
    // Identify the worst remaining violation for the diagnostic.
    double worst_depth = 0;
    Eigen::Index worst_v = 0;
    for (Eigen::Index v = 0; v < V; ++v) {
      const Vec3 p = out.vertices.row(v).transpose();
      for (int b = 0; b < n_caps; ++b) {
        if (is_excluded(v, b)) continue;
        const double depth =
            capsules[b].radius + epsilon -
            (p - closest_segment_point(p, capsules[b].a, capsules[b].b)).norm();
        if (depth > worst_depth) {
          worst_depth = depth;
          worst_v = v;
        }
      }
    }
    std::ostringstream os;
    os << "resolve_penetration: no convergence after " << max_sweeps
       << " sweeps; worst vertex " << worst_v << " still short by "
       << worst_depth << " m";
    throw std::runtime_error(os.str());
  }

  // Clearance postcondition on every vertex/capsule pair.
  for (Eigen::Index v = 0; v < V; ++v) {
    const Vec3 p = out.vertices.row(v).transpose();
    for (int b = 0; b < n_caps; ++b) {
      if (is_excluded(v, b)) continue;
      const double dist =
          (p - closest_segment_point(p, capsules[b].a, capsules[b].b)).norm();
      require(dist >= capsules[b].radius + epsilon - 1e-9,
              "resolve_penetration: clearance postcondition violated");
    }
  }

  if (report) {
    *report = PenetrationReport{};
    report->sweeps = sweeps + (sweeps < max_sweeps ? 1 : 0);
    for (Eigen::Index v = 0; v < V; ++v) {
      const double d = (out.vertices.row(v) - mesh.vertices.row(v)).norm();
      if (d > 0) {
        ++report->moved_vertices;
        report->total_displacement += d;
        report->max_displacement = std::max(report->max_displacement, d);
      }
    }
  }
  return out;
}

std::pair<GroundTruthInstance, MultiViewObservation> generate_instance(
    Rng& rng, const BodyTemplate& t, const SynthConfig& config, int instance_id,
    const std::string& split_tag, int frame_index) {
  config.validate();
  const ShapeStats stats = ShapeStats::standard(t.shape_dim);

  GroundTruthInstance gt;
  gt.instance_id = instance_id;
  gt.split_tag = split_tag;
  gt.body.shape = sample_shape(rng, stats);
  gt.body.pose = sample_pose(rng, t, config, frame_index);
  gt.joints3d_gt = joints3d(t, gt.body);
  gt.mesh_gt = resolve_penetration(skin(t, gt.body), posed_capsules(t, gt.body),
                                   own_bone_exclusions(t),
                                   config.epsilon_margin_m);

  gt.cameras = canonical_views(config.n_views);
  for (auto& cam : gt.cameras) {
    cam.scale = config.base_scale_px_per_m *
                rng.uniform(config.scale_jitter_lo, config.scale_jitter_hi);
    cam.translation =
        Vec2(rng.uniform(-config.translation_jitter_px, config.translation_jitter_px),
             rng.uniform(-config.translation_jitter_px, config.translation_jitter_px));
  }

  const Points3 keypoints = keypoints3d(t, gt.body);
  const int J = static_cast<int>(keypoints.rows());

  MultiViewObservation obs;
  for (int view = 0; view < config.n_views; ++view) {
    ViewFeature f;
    f.view_id = view;
    f.joints2d = project(gt.cameras[view], keypoints);
    for (int j = 0; j < J; ++j) {
      f.joints2d(j, 0) += config.noise_sigma_px * rng.normal();
      f.joints2d(j, 1) += config.noise_sigma_px * rng.normal();
    }
    f.visibility.resize(J);
    int visible = 0;
    for (int j = 0; j < J; ++j) {
      const bool vis = rng.uniform() >= config.occlusion_rate;
      f.visibility[j] = vis;
      visible += vis ? 1 : 0;
    }
    const int floor_count = std::min(config.min_visible_per_view, J);
    while (visible < floor_count) {
      const int j = rng.uniform_int(0, J - 1);
      if (!f.visibility[j]) {
        f.visibility[j] = true;
        ++visible;
      }
    }
    obs.push_back(std::move(f));
  }
  return {std::move(gt), std::move(obs)};
}

namespace {

nlohmann::json instance_to_json(const GroundTruthInstance& gt,
                                const MultiViewObservation& obs,
                                bool export_mesh) {
  nlohmann::json j;
  j["instance_id"] = gt.instance_id;
  j["split"] = gt.split_tag;
  j["body"] = to_json(gt.body);
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : gt.cameras) cams.push_back(to_json(c));
  j["cameras"] = std::move(cams);
  j["joints3d_gt"] = to_json(gt.joints3d_gt);
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : obs) views.push_back(to_json(v));
  j["views"] = std::move(views);
  if (export_mesh) j["mesh_gt_vertices"] = to_json(Points3(gt.mesh_gt.vertices));
  return j;
}

std::string instance_file_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "inst_%06d.json", id);
  return buf;
}

}  // namespace

void generate_dataset(const BodyTemplate& t, const SynthConfig& config,
                      const std::filesystem::path& out_dir, int jobs) {
  config.validate();
  t.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "instances");
  save_template(t, out_dir / "template.mvbt", TemplateFormat::binary);

  const int train_shapes = static_cast<int>(
      std::floor(config.split_fraction * config.n_shapes));
  const int n_instances = config.n_shapes * config.poses_per_shape;
  std::vector<int> train_ids, test_ids;
  for (int id = 0; id < n_instances; ++id) {
    const int shape_idx = id / config.poses_per_shape;
    (shape_idx < train_shapes ? train_ids : test_ids).push_back(id);
  }

  const auto worker_body = [&](int id) {
    const int shape_idx = id / config.poses_per_shape;
    const std::string split = shape_idx < train_shapes ? "train" : "test";
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(id)));
    auto [gt, obs] = generate_instance(rng, t, config, id, split, id);
    const auto j = instance_to_json(gt, obs, config.export_meshes);
    write_file_atomic(out_dir / "instances" / instance_file_name(id),
                      j.dump(1) + "\n");
  };

  const int workers = std::max(1, jobs);
  if (workers == 1) {
    for (int id = 0; id < n_instances; ++id) worker_body(id);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (int id = next.fetch_add(1); id < n_instances;
               id = next.fetch_add(1))
            worker_body(id);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  nlohmann::json manifest;
  manifest["format"] = "mvbody-dataset-1";
  manifest["master_seed"] = config.seed;
  manifest["config"] = to_json(config);
  manifest["n_instances"] = n_instances;
  manifest["train_ids"] = train_ids;
  manifest["test_ids"] = test_ids;
  manifest["template_file"] = "template.mvbt";
  write_file_atomic(out_dir / "manifest.json", manifest.dump(1) + "\n");
}

Dataset open_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  require_data(fs::exists(root / "manifest.json"),
               "dataset: no manifest.json under " + root.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(root / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("dataset: manifest parse error: " + std::string(e.what()));
  }
  Dataset d;
  d.root = root;
  try {
    d.config = synth_config_from_json(manifest.at("config"));
    d.train_ids = manifest.at("train_ids").get<std::vector<int>>();
    d.test_ids = manifest.at("test_ids").get<std::vector<int>>();
    d.body_template = load_template(
        root / manifest.at("template_file").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw io_error("dataset: manifest field error: " + std::string(e.what()));
  }
  return d;
}

DatasetInstance load_instance(const Dataset& dataset, int instance_id) {
  const auto path =
      dataset.root / "instances" / instance_file_name(instance_id);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("dataset: instance parse error in " + path.string() + ": " +
                   e.what());
  }
  DatasetInstance inst;
  try {
    inst.gt.instance_id = j.at("instance_id").get<int>();
    inst.gt.split_tag = j.at("split").get<std::string>();
    inst.gt.body = body_params_from_json(j.at("body"));
    for (const auto& c : j.at("cameras"))
      inst.gt.cameras.push_back(camera_params_from_json(c));
    inst.gt.joints3d_gt = points3_from_json(j.at("joints3d_gt"), "joints3d_gt");
    for (const auto& v : j.at("views"))
      inst.observation.push_back(view_feature_from_json(v));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("dataset: instance field error in " + path.string() + ": " +
                   e.what());
  }

  // Ground truth is re-derivable from the stored parameters; check the
  // stored joints against a fresh derivation before trusting the record.
  const BodyTemplate& t = dataset.body_template;
  const Points3 rederived = joints3d(t, inst.gt.body);
  require_data(inst.gt.joints3d_gt.rows() == rederived.rows() &&
                   (inst.gt.joints3d_gt - rederived).cwiseAbs().maxCoeff() <= 1e-9,
               "dataset: stored joints3d_gt inconsistent with body parameters in " +
                   path.string());
  inst.gt.mesh_gt = resolve_penetration(
      skin(t, inst.gt.body), posed_capsules(t, inst.gt.body),
      own_bone_exclusions(t), dataset.config.epsilon_margin_m);
  return inst;
}

}  // namespace mvb
