#pragma once

#include "mvbody/common.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace mvb {

/// Triangle mesh; faces usually shared with the owning template.
struct Mesh {
  Points3 vertices;
  FaceList faces;
};

/// Names of the 14 evaluation keypoints, in template keypoint_map order.
inline constexpr std::array<const char*, 14> kKeypointNames = {
    "r_ankle", "r_knee",  "r_hip",      "l_hip",      "l_knee", "l_ankle",
    "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist",
    "neck",    "head"};

inline constexpr int kKeypointCount = 14;

/// Parametric articulated body: rest mesh, linear shape/pose blendshape
/// bases, skinning weights, joint regressor, and kinematic tree.
///
/// Conventions:
///  - all geometry in meters, double precision;
///  - shape_basis / pose_basis rows are vertex-major (x,y,z per vertex);
///  - bone b (b = 0..K-2) is the segment parent[b+1] -> b+1, driven by
///    joint parent[b+1] for skinning purposes;
///  - the root carries no rotation: global orientation lives in the
///    per-view camera.
struct BodyTemplate {
  int vertex_count = 0;  // V
  int joint_count = 0;   // K
  int shape_dim = 0;     // B

  Points3 rest_vertices;      // V x 3
  MatX shape_basis;           // 3V x B
  MatX pose_basis;            // 3V x 9(K-1); may be all-zero
  MatX skinning_weights;      // V x K, rows sum to 1
  MatX joint_regressor;       // K x V, rows sum to 1
  std::vector<int> parent;    // K entries, parent[0] == -1
  FaceList faces;
  std::array<int, kKeypointCount> keypoint_map{};  // model joint per keypoint
  VecX bone_capsule_radii;    // K-1, meters

  // Tape-measurement metadata: cross-section planes sit at these fractions
  // of the span between the ankle and head keypoints, along torso_axis.
  // Order: neck, chest, waist, hip.
  Vec3 torso_axis{0.0, 1.0, 0.0};
  std::array<double, 4> section_fractions{0.95, 0.80, 0.65, 0.52};

  int pose_dim() const { return 9 * (joint_count - 1); }

  /// Throws std::runtime_error naming the first violated invariant.
  void validate() const;
};

/// Shared pose/shape parameters. Pose row j is the axis-angle rotation of
/// joint j+1 (the root has none; global rotation is camera-side).
struct BodyParams {
  Points3 pose;  // (K-1) x 3, radians
  VecX shape;    // B

  static BodyParams zero(const BodyTemplate& t) {
    BodyParams p;
    p.pose = Points3::Zero(t.joint_count - 1, 3);
    p.shape = VecX::Zero(t.shape_dim);
    return p;
  }
};

/// Rigid transform x -> R x + t.
struct Transform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  Transform compose(const Transform& other) const {  // this ∘ other
    return Transform{R * other.R, R * other.t + t};
  }
};

/// Axis-angle to rotation matrix. Total on finite input; below-threshold
/// angles use a 2nd-order Taylor expansion so the rest pose is exact and
/// differentiable.
Mat3 rodrigues(const Vec3& r);

/// dR/dr_i for the axis-angle map, analytic (Taylor near zero).
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& r);

/// Concatenated row-major (R_k - I) blocks for each non-root joint, in tree
/// order. Zero pose gives the zero vector.
VecX pose_feature(const BodyTemplate& t, const BodyParams& params);

/// Rest mesh with shape blendshapes applied: X0 + S*beta.
Mesh shape_mesh(const BodyTemplate& t, const VecX& shape);

/// Rest joint locations: joint_regressor * vertices.
Points3 regress_joints(const BodyTemplate& t, const Mesh& rest_mesh);

/// Skinning transforms G_k per joint (identity at rest pose): forward
/// kinematics over the parent tree with rest-joint offsets folded in, so
/// G_k maps a rest-space point into its posed location.
std::vector<Transform> global_transforms(const BodyTemplate& t,
                                         const BodyParams& params,
                                         const Points3& rest_joints);

/// Full linear blend skinning:
/// vertices = sum_k W[:,k] * G_k(X0 + S*beta + P*pose_feature).
Mesh skin(const BodyTemplate& t, const BodyParams& params);

/// Skinning with caller-supplied transforms (used by rigid-equivariance
/// checks and by tooling that re-poses a shaped mesh).
Points3 skin_with_transforms(const BodyTemplate& t, const Points3& shaped,
                             const std::vector<Transform>& transforms);

/// Posed joint locations: G_k applied to rest joint k. K x 3, meters.
Points3 joints3d(const BodyTemplate& t, const BodyParams& params);

/// Rows of joints3d for the 14 evaluation keypoints.
Points3 keypoints3d(const BodyTemplate& t, const BodyParams& params);

/// Analytic derivatives of the flattened K x 3 posed joints (row-major:
/// x,y,z per joint) with respect to pose (3(K-1) columns, row-major per
/// joint) and shape (B columns).
struct JointJacobians {
  MatX d_pose;   // 3K x 3(K-1)
  MatX d_shape;  // 3K x B
};
JointJacobians joints3d_jacobian(const BodyTemplate& t,
                                 const BodyParams& params);

/// Settings for the procedurally generated capsule-limb humanoid.
struct MiniTemplateConfig {
  int vertex_target = 1200;    // actual count is near this, never below 18/bone
  std::uint64_t seed = 0;      // ring phase jitter only; fully deterministic
};

/// Procedural desk-scale body template: vertices sampled on per-bone
/// capsules, inverse-distance skinning over the two nearest bones,
/// nearest-ring joint regressor, ten interpretable shape directions,
/// zero pose basis.
BodyTemplate make_mini_template(const MiniTemplateConfig& config = {});

enum class TemplateFormat { binary, json };

/// Template container I/O. The binary form starts with magic "MVBT1"; the
/// JSON form is accepted interchangeably (the loader sniffs the magic).
/// Round-trips are bit-exact. Loading validates all template invariants and
/// throws io_error naming the failed field.
void save_template(const BodyTemplate& t, const std::filesystem::path& path,
                   TemplateFormat format = TemplateFormat::binary);
BodyTemplate load_template(const std::filesystem::path& path);

}  // namespace mvb
