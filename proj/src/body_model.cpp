#include "mvbody/body_model.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace mvb {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

constexpr double kSmallAngle = 1e-4;  // below this, Taylor expansions

std::string f3(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

}  // namespace

void BodyTemplate::validate() const {
  require(vertex_count >= 1, "vertex_count: must be positive");
  require(joint_count >= 1, "joint_count: must be positive");
  require(shape_dim >= 0, "shape_dim: must be nonnegative");
  require(rest_vertices.rows() == vertex_count,
          "rest_vertices: expected " + std::to_string(vertex_count) + " rows");
  require(shape_basis.rows() == 3 * vertex_count && shape_basis.cols() == shape_dim,
          "shape_basis: expected 3V x B = " + std::to_string(3 * vertex_count) +
              " x " + std::to_string(shape_dim));
  require(pose_basis.rows() == 3 * vertex_count && pose_basis.cols() == pose_dim(),
          "pose_basis: expected 3V x 9(K-1)");
  require(skinning_weights.rows() == vertex_count &&
              skinning_weights.cols() == joint_count,
          "skinning_weights: expected V x K");
  require(joint_regressor.rows() == joint_count &&
              joint_regressor.cols() == vertex_count,
          "joint_regressor: expected K x V");

  for (int v = 0; v < vertex_count; ++v) {
    double sum = 0;
    for (int k = 0; k < joint_count; ++k) {
      const double w = skinning_weights(v, k);
      require(w >= 0.0, "skinning_weights: negative entry at vertex " +
                            std::to_string(v));
      sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-9,
            "skinning_weights: row " + std::to_string(v) + " sums to " + f3(sum));
  }
  for (int k = 0; k < joint_count; ++k) {
    double sum = 0;
    for (int v = 0; v < vertex_count; ++v) {
      const double w = joint_regressor(k, v);
      require(w >= 0.0,
              "joint_regressor: negative entry in row " + std::to_string(k));
      sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-9,
            "joint_regressor: row " + std::to_string(k) + " sums to " + f3(sum));
  }

  require(static_cast<int>(parent.size()) == joint_count,
          "parent: expected K entries");
  require(parent[0] == -1, "parent: root sentinel must be -1");
  for (int k = 1; k < joint_count; ++k) {
    require(parent[k] >= 0 && parent[k] < k,
            "parent: entry " + std::to_string(k) + " breaks topological order");
  }

  std::unordered_map<std::uint64_t, int> edge_count;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t a = faces(f, e);
      const std::uint32_t b = faces(f, (e + 1) % 3);
      require(a < static_cast<std::uint32_t>(vertex_count) &&
                  b < static_cast<std::uint32_t>(vertex_count),
              "faces: vertex index out of range in face " + std::to_string(f));
      require(a != b, "faces: degenerate edge in face " + std::to_string(f));
      const std::uint64_t key =
          (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
      const int c = ++edge_count[key];
      require(c <= 2, "faces: edge shared by more than two faces (non-manifold)");
    }
  }

  for (int i = 0; i < kKeypointCount; ++i) {
    require(keypoint_map[i] >= 0 && keypoint_map[i] < joint_count,
            std::string("keypoint_map: joint index out of range for ") +
                kKeypointNames[i]);
  }

  require(bone_capsule_radii.size() == joint_count - 1,
          "bone_capsule_radii: expected K-1 entries");
  for (int b = 0; b < joint_count - 1; ++b) {
    require(bone_capsule_radii[b] > 0.0,
            "bone_capsule_radii: nonpositive radius at bone " + std::to_string(b));
  }
  require(torso_axis.norm() > 0.0, "torso_axis: must be nonzero");
  for (double f : section_fractions) {
    require(f > 0.0 && f <= 1.0, "section_fractions: outside (0, 1]");
  }
}

Mat3 rodrigues(const Vec3& r) {
  const double theta2 = r.squaredNorm();
  const Mat3 rx = skew(r);
  double a, b;  // sin(t)/t, (1-cos(t))/t^2
  if (theta2 < kSmallAngle * kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * rx + b * (rx * rx);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& r) {
  std::array<Mat3, 3> d;
  const double theta2 = r.squaredNorm();
  if (theta2 < kSmallAngle * kSmallAngle) {
    // d/dr_i of (I + [r]x + 0.5 [r]x^2), exact at the rest pose.
    const Mat3 rx = skew(r);
    for (int i = 0; i < 3; ++i) {
      const Mat3 ei = skew(Vec3::Unit(i));
      d[i] = ei + 0.5 * (ei * rx + rx * ei);
    }
    return d;
  }
  const Mat3 R = rodrigues(r);
  const Mat3 rx = skew(r);
  const Mat3 ImR = Mat3::Identity() - R;
  for (int i = 0; i < 3; ++i) {
    const Vec3 v = r.cross(Vec3(ImR.col(i)));
    d[i] = ((r[i] * rx + skew(v)) / theta2) * R;
  }
  return d;
}

VecX pose_feature(const BodyTemplate& t, const BodyParams& params) {
  const int n = t.joint_count - 1;
  require(params.pose.rows() == n, "pose_feature: pose has wrong joint count");
  VecX feature(9 * n);
  for (int j = 0; j < n; ++j) {
    const Mat3 d = rodrigues(params.pose.row(j)) - Mat3::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) feature[9 * j + 3 * r + c] = d(r, c);
  }
  return feature;
}

Mesh shape_mesh(const BodyTemplate& t, const VecX& shape) {
  require(shape.size() == t.shape_dim,
          "shape_mesh: expected " + std::to_string(t.shape_dim) +
              " shape coefficients, got " + std::to_string(shape.size()));
  Mesh mesh;
  mesh.faces = t.faces;
  mesh.vertices = t.rest_vertices;
  if (t.shape_dim > 0) {
    const VecX offset = t.shape_basis * shape;  // 3V
    for (int v = 0; v < t.vertex_count; ++v)
      mesh.vertices.row(v) += offset.segment<3>(3 * v).transpose();
  }
  return mesh;
}

Points3 regress_joints(const BodyTemplate& t, const Mesh& rest_mesh) {
  require(rest_mesh.vertices.rows() == t.vertex_count,
          "regress_joints: mesh vertex count mismatch");
  return t.joint_regressor * rest_mesh.vertices;
}

namespace {

// Joint frames A_k: world pose of each joint (A_k maps the joint-local
// origin to the posed joint location).
std::vector<Transform> joint_frames(const BodyTemplate& t,
                                    const BodyParams& params,
                                    const Points3& rest_joints) {
  const int K = t.joint_count;
  std::vector<Transform> frames(K);
  frames[0] = Transform{Mat3::Identity(), rest_joints.row(0).transpose()};
  for (int k = 1; k < K; ++k) {
    const int p = t.parent[k];
    const Transform local{rodrigues(params.pose.row(k - 1)),
                          (rest_joints.row(k) - rest_joints.row(p)).transpose()};
    frames[k] = frames[p].compose(local);
  }
  return frames;
}

}  // namespace

std::vector<Transform> global_transforms(const BodyTemplate& t,
                                         const BodyParams& params,
                                         const Points3& rest_joints) {
  require(rest_joints.rows() == t.joint_count,
          "global_transforms: rest joint count mismatch");
  const auto frames = joint_frames(t, params, rest_joints);
  std::vector<Transform> g(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Vec3 jk = rest_joints.row(static_cast<int>(k)).transpose();
    g[k] = Transform{frames[k].R, frames[k].t - frames[k].R * jk};
  }
  return g;
}

Points3 skin_with_transforms(const BodyTemplate& t, const Points3& shaped,
                             const std::vector<Transform>& transforms) {
  require(shaped.rows() == t.vertex_count,
          "skin_with_transforms: vertex count mismatch");
  require(static_cast<int>(transforms.size()) == t.joint_count,
          "skin_with_transforms: transform count mismatch");
  Points3 out = Points3::Zero(t.vertex_count, 3);
  for (int v = 0; v < t.vertex_count; ++v) {
    const Vec3 x = shaped.row(v).transpose();
    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < t.joint_count; ++k) {
      const double w = t.skinning_weights(v, k);
      if (w == 0.0) continue;
      acc += w * transforms[k].apply(x);
    }
    out.row(v) = acc.transpose();
  }
  return out;
}

Mesh skin(const BodyTemplate& t, const BodyParams& params) {
  Mesh shaped = shape_mesh(t, params.shape);
  const Points3 rest_joints = regress_joints(t, shaped);
  // Pose-corrective offsets apply after joint regression.
  if (t.pose_basis.cols() > 0) {
    const VecX offset = t.pose_basis * pose_feature(t, params);
    for (int v = 0; v < t.vertex_count; ++v)
      shaped.vertices.row(v) += offset.segment<3>(3 * v).transpose();
  }
  const auto g = global_transforms(t, params, rest_joints);
  Mesh posed;
  posed.faces = t.faces;
  posed.vertices = skin_with_transforms(t, shaped.vertices, g);
  return posed;
}

Points3 joints3d(const BodyTemplate& t, const BodyParams& params) {
  const Points3 rest_joints = regress_joints(t, shape_mesh(t, params.shape));
  const auto frames = joint_frames(t, params, rest_joints);
  Points3 out(t.joint_count, 3);
  for (int k = 0; k < t.joint_count; ++k) out.row(k) = frames[k].t.transpose();
  return out;
}

Points3 keypoints3d(const BodyTemplate& t, const BodyParams& params) {
  const Points3 joints = joints3d(t, params);
  Points3 out(kKeypointCount, 3);
  for (int i = 0; i < kKeypointCount; ++i)
    out.row(i) = joints.row(t.keypoint_map[i]);
  return out;
}

JointJacobians joints3d_jacobian(const BodyTemplate& t,
                                 const BodyParams& params) {
  const int K = t.joint_count;
  const int B = t.shape_dim;
  const Points3 rest_joints = regress_joints(t, shape_mesh(t, params.shape));

  // Forward pass: local rotations and world frames.
  std::vector<Mat3> local(K, Mat3::Identity());
  for (int k = 1; k < K; ++k) local[k] = rodrigues(params.pose.row(k - 1));
  const auto frames = joint_frames(t, params, rest_joints);

  JointJacobians jac;
  jac.d_pose = MatX::Zero(3 * K, 3 * (K - 1));
  jac.d_shape = MatX::Zero(3 * K, B);

  // Pose columns: propagate the derivative of each joint's local rotation
  // down its subtree.
  std::vector<Mat3> dRw(K);
  std::vector<Vec3> dp(K);
  std::vector<char> active(K);
  for (int m = 1; m < K; ++m) {
    const auto dlocal = rodrigues_jacobian(params.pose.row(m - 1));
    for (int axis = 0; axis < 3; ++axis) {
      const int col = 3 * (m - 1) + axis;
      std::fill(active.begin(), active.end(), 0);
      dRw[m] = frames[t.parent[m]].R * dlocal[axis];
      dp[m] = Vec3::Zero();
      active[m] = 1;
      for (int k = m + 1; k < K; ++k) {
        const int q = t.parent[k];
        if (!active[q]) continue;
        active[k] = 1;
        dRw[k] = dRw[q] * local[k];
        dp[k] = dRw[q] * (rest_joints.row(k) - rest_joints.row(q)).transpose() +
                dp[q];
        jac.d_pose.block<3, 1>(3 * k, col) = dp[k];
      }
    }
  }

  // Shape columns: rest joints are linear in shape; rotations are not
  // shape-dependent, so derivatives chain through translations only.
  if (B > 0) {
    for (int b = 0; b < B; ++b) {
      Points3 dverts(t.vertex_count, 3);
      for (int v = 0; v < t.vertex_count; ++v)
        dverts.row(v) = t.shape_basis.col(b).segment<3>(3 * v).transpose();
      const Points3 dj_mat = t.joint_regressor * dverts;  // K x 3
      std::vector<Vec3> dj(K);
      for (int k = 0; k < K; ++k) dj[k] = dj_mat.row(k).transpose();
      std::vector<Vec3> dpk(K);
      dpk[0] = dj[0];
      jac.d_shape.block<3, 1>(0, b) = dpk[0];
      for (int k = 1; k < K; ++k) {
        const int q = t.parent[k];
        dpk[k] = frames[q].R * (dj[k] - dj[q]) + dpk[q];
        jac.d_shape.block<3, 1>(3 * k, b) = dpk[k];
      }
    }
  }
  return jac;
}

}  // namespace mvb
