#pragma once

#include "mvbody/body_model.hpp"
#include "mvbody/camera.hpp"
#include "mvbody/common.hpp"
#include "mvbody/observation.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mvb {

/// Shape coefficient statistics; sampling is uniform over
/// [mean - 3*stddev, mean + 3*stddev] per component.
struct ShapeStats {
  VecX mean;
  VecX stddev;

  static ShapeStats standard(int shape_dim) {
    return ShapeStats{VecX::Zero(shape_dim), VecX::Ones(shape_dim)};
  }
};

struct SynthConfig {
  int n_shapes = 100;
  int poses_per_shape = 5;
  int n_views = 4;
  double noise_sigma_px = 0.0;
  double occlusion_rate = 0.0;       // per joint per view
  int min_visible_per_view = 6;
  double max_pose_angle_rad = 30.0 * M_PI / 180.0;  // per-axis bound
  std::optional<std::filesystem::path> pose_file;   // overrides procedural poses
  double epsilon_margin_m = 0.005;   // clearance reserved outside each capsule
  std::uint64_t seed = 0;
  double split_fraction = 0.9;       // leading fraction of shapes -> train
  double base_scale_px_per_m = 200.0;
  double scale_jitter_lo = 0.8;
  double scale_jitter_hi = 1.2;
  double translation_jitter_px = 20.0;
  bool export_meshes = false;

  void validate() const;
};

/// Ground truth for one generated instance. The mesh is the skinned body
/// after penetration resolution; joints come straight from the kinematics.
struct GroundTruthInstance {
  BodyParams body;
  std::vector<CameraParams> cameras;
  Points3 joints3d_gt;  // K x 3
  Mesh mesh_gt;
  int instance_id = 0;
  std::string split_tag;  // "train" | "test"
};

/// Uniform independent sample in [mean - 3 sd, mean + 3 sd] per component.
VecX sample_shape(Rng& rng, const ShapeStats& stats);

/// Procedural pose: every axis-angle entry uniform in
/// [-max_pose_angle, +max_pose_angle]. When a pose file is configured its
/// frames are returned verbatim (cycled by frame_index).
Points3 sample_pose(Rng& rng, const BodyTemplate& t, const SynthConfig& config,
                    int frame_index = 0);

struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0;
};

/// Bone capsules in the posed configuration of `params`.
std::vector<Capsule> posed_capsules(const BodyTemplate& t,
                                    const BodyParams& params);

/// Per-vertex bone indices a vertex is never tested against: every bone
/// driven by one of the vertex's two highest-weight skinning joints.
std::vector<std::vector<int>> own_bone_exclusions(const BodyTemplate& t);

struct PenetrationReport {
  int moved_vertices = 0;
  int sweeps = 0;
  double max_displacement = 0;
  double total_displacement = 0;
};

/// Pops vertices out of colliding capsules with minimal displacement until
/// every vertex keeps at least `epsilon` clearance from every non-excluded
/// capsule. Multi-capsule contacts use iterated projection (at most
/// max_sweeps); non-convergence throws with a worst-vertex diagnostic.
Mesh resolve_penetration(const Mesh& mesh, const std::vector<Capsule>& capsules,
                         const std::vector<std::vector<int>>& exclusions,
                         double epsilon, PenetrationReport* report = nullptr,
                         int max_sweeps = 50);

/// One complete sample: body parameters, penetration-resolved mesh, jittered
/// canonical cameras, and noisy/occluded keypoint observations per view.
std::pair<GroundTruthInstance, MultiViewObservation> generate_instance(
    Rng& rng, const BodyTemplate& t, const SynthConfig& config,
    int instance_id = 0, const std::string& split_tag = "train",
    int frame_index = 0);

/// Dataset directory layout:
///   manifest.json            config echo, master seed, split id lists
///   template.mvbt            the generating template (binary container)
///   instances/inst_NNNNNN.json
/// Instances are generated in parallel (`jobs`), each from a seed derived
/// from (master seed, instance index), so output bytes depend only on the
/// config. Meshes are re-derivable and not stored unless export_meshes.
void generate_dataset(const BodyTemplate& t, const SynthConfig& config,
                      const std::filesystem::path& out_dir, int jobs = 1);

struct DatasetInstance {
  GroundTruthInstance gt;
  MultiViewObservation observation;
};

struct Dataset {
  BodyTemplate body_template;
  SynthConfig config;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::filesystem::path root;

  int instance_count() const {
    return static_cast<int>(train_ids.size() + test_ids.size());
  }
};

/// Reads manifest + template. Instance files load lazily via load_instance.
Dataset open_dataset(const std::filesystem::path& root);

/// Loads one instance, re-derives its mesh/joints from the stored
/// parameters, and asserts consistency with the stored ground truth.
DatasetInstance load_instance(const Dataset& dataset, int instance_id);

}  // namespace mvb
