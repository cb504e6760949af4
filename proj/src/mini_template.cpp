#include "mvbody/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mvb {

namespace {

constexpr int kJoints = 24;
constexpr int kShapeDim = 10;
constexpr int kBones = kJoints - 1;

// clang-format off
const int kParent[kJoints] = {
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

const double kRestJoint[kJoints][3] = {
    { 0.00, 0.95, 0.00},   //  0 pelvis
    { 0.09, 0.91, 0.00},   //  1 l_hip
    {-0.09, 0.91, 0.00},   //  2 r_hip
    { 0.00, 1.05, 0.00},   //  3 spine1
    { 0.10, 0.50, 0.00},   //  4 l_knee
    {-0.10, 0.50, 0.00},   //  5 r_knee
    { 0.00, 1.15, 0.00},   //  6 spine2
    { 0.11, 0.09, 0.00},   //  7 l_ankle
    {-0.11, 0.09, 0.00},   //  8 r_ankle
    { 0.00, 1.25, 0.00},   //  9 spine3
    { 0.12, 0.02, 0.10},   // 10 l_foot
    {-0.12, 0.02, 0.10},   // 11 r_foot
    { 0.00, 1.42, 0.00},   // 12 neck
    { 0.07, 1.35, 0.00},   // 13 l_collar
    {-0.07, 1.35, 0.00},   // 14 r_collar
    { 0.00, 1.60, 0.00},   // 15 head
    { 0.18, 1.38, 0.00},   // 16 l_shoulder
    {-0.18, 1.38, 0.00},   // 17 r_shoulder
    { 0.45, 1.38, 0.00},   // 18 l_elbow
    {-0.45, 1.38, 0.00},   // 19 r_elbow
    { 0.70, 1.38, 0.00},   // 20 l_wrist
    {-0.70, 1.38, 0.00},   // 21 r_wrist
    { 0.79, 1.38, 0.00},   // 22 l_hand
    {-0.79, 1.38, 0.00}};  // 23 r_hand

// Bone b is the segment parent[b+1] -> b+1.
const double kBoneRadius[kBones] = {
    0.050, 0.050, 0.160,   // pelvis->l_hip, pelvis->r_hip, pelvis->spine1
    0.065, 0.065, 0.155,   // thighs, spine1->spine2
    0.050, 0.050, 0.150,   // shanks, spine2->spine3
    0.035, 0.035,          // feet
    0.120,                 // spine3->neck
    0.055, 0.055,          // collars
    0.055,                 // neck->head
    0.055, 0.055,          // collar->shoulder
    0.045, 0.045,          // upper arms
    0.040, 0.040,          // forearms
    0.030, 0.030};         // hands

// LSP-style evaluation keypoints in kKeypointNames order.
const int kKeypointJoints[kKeypointCount] = {
    8, 5, 2, 1, 4, 7, 21, 19, 17, 16, 18, 20, 12, 15};
// clang-format on

// Bone classification for the shape directions (child joint ids).
bool is_torso_child(int c) { return c == 3 || c == 6 || c == 9 || c == 12 || c == 15; }
bool is_leg_child(int c) {
  return c == 4 || c == 5 || c == 7 || c == 8 || c == 10 || c == 11;
}
bool is_arm_child(int c) { return c >= 16 && c <= 23; }
bool is_collar_child(int c) { return c == 13 || c == 14; }
bool is_lower_torso_child(int c) { return c == 3 || c == 6; }

struct BoneLayout {
  int first_vertex = 0;
  int vertex_count = 0;
  int ring_size = 0;        // m
  int tube_rings = 0;       // >= 2, first centered at parent joint, last at child
  int cap_rings = 0;        // per end
  int tube_ring_start = 0;  // index of first tube-ring vertex
};

Vec3 any_perpendicular(const Vec3& d) {
  const Vec3 axis =
      std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return d.cross(axis).normalized();
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

Vec3 closest_segment_point(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + t * ab;
}

}  // namespace

BodyTemplate make_mini_template(const MiniTemplateConfig& config) {
  if (config.vertex_target < 4 * kJoints) {
    throw config_error("mini template: vertex target " +
                       std::to_string(config.vertex_target) +
                       " is below 4K = " + std::to_string(4 * kJoints));
  }

  std::vector<Vec3> joint(kJoints);
  for (int k = 0; k < kJoints; ++k)
    joint[k] = Vec3(kRestJoint[k][0], kRestJoint[k][1], kRestJoint[k][2]);

  // Vertex budget: every bone gets a minimal closed capsule; leftover
  // budget becomes extra tube rings, allotted by bone length.
  std::vector<double> bone_len(kBones);
  double total_len = 0;
  for (int b = 0; b < kBones; ++b) {
    bone_len[b] = (joint[b + 1] - joint[kParent[b + 1]]).norm();
    total_len += bone_len[b];
  }
  int ring_m = 8;
  if (config.vertex_target < 23 * (4 * 8 + 2)) ring_m = 6;
  if (config.vertex_target < 23 * (4 * 6 + 2)) ring_m = 4;
  const int base_total = kBones * (4 * ring_m + 2);
  const int spare_rings =
      std::max(0, (config.vertex_target - base_total) / ring_m);

  std::vector<BoneLayout> layout(kBones);
  int vertex_cursor = 0;
  for (int b = 0; b < kBones; ++b) {
    BoneLayout& L = layout[b];
    L.ring_size = ring_m;
    L.cap_rings = 1;
    L.tube_rings =
        2 + static_cast<int>(std::floor(spare_rings * bone_len[b] / total_len));
    L.first_vertex = vertex_cursor;
    const int rings = L.tube_rings + 2 * L.cap_rings;
    L.vertex_count = ring_m * rings + 2;
    L.tube_ring_start = L.first_vertex + 1 + L.cap_rings * ring_m;
    vertex_cursor += L.vertex_count;
  }
  const int V = vertex_cursor;

  Points3 vertices(V, 3);
  std::vector<int> vertex_bone(V, -1);
  std::vector<std::array<std::uint32_t, 3>> faces;
  faces.reserve(static_cast<std::size_t>(V) * 2);

  for (int b = 0; b < kBones; ++b) {
    const BoneLayout& L = layout[b];
    const Vec3 a = joint[kParent[b + 1]];
    const Vec3 c = joint[b + 1];
    const double r = kBoneRadius[b];
    const Vec3 dir = (c - a).normalized();
    const Vec3 u = any_perpendicular(dir);
    const Vec3 w = dir.cross(u);
    const double phase =
        2.0 * M_PI / L.ring_size *
        (static_cast<double>(mix_seed(config.seed, b) % 1024) / 1024.0);

    // Ring centers/radii along the capsule, apex to apex.
    std::vector<Vec3> center;
    std::vector<double> radius;
    for (int j = L.cap_rings; j >= 1; --j) {  // cap at the parent end
      const double psi = 0.5 * M_PI * j / (L.cap_rings + 1);
      center.push_back(a - dir * (r * std::sin(psi)));
      radius.push_back(r * std::cos(psi));
    }
    for (int j = 0; j < L.tube_rings; ++j) {
      const double t = static_cast<double>(j) / (L.tube_rings - 1);
      center.push_back(a + t * (c - a));
      radius.push_back(r);
    }
    for (int j = 1; j <= L.cap_rings; ++j) {  // cap at the child end
      const double psi = 0.5 * M_PI * j / (L.cap_rings + 1);
      center.push_back(c + dir * (r * std::sin(psi)));
      radius.push_back(r * std::cos(psi));
    }

    int idx = L.first_vertex;
    const int apex_a = idx++;
    vertices.row(apex_a) = (a - dir * r).transpose();
    vertex_bone[apex_a] = b;
    const int ring0 = idx;
    for (std::size_t ring = 0; ring < center.size(); ++ring) {
      for (int i = 0; i < L.ring_size; ++i) {
        const double phi = phase + 2.0 * M_PI * i / L.ring_size;
        vertices.row(idx) =
            (center[ring] + radius[ring] * (std::cos(phi) * u + std::sin(phi) * w))
                .transpose();
        vertex_bone[idx] = b;
        ++idx;
      }
    }
    const int apex_c = idx++;
    vertices.row(apex_c) = (c + dir * r).transpose();
    vertex_bone[apex_c] = b;

    // Triangulation: fans at both apexes, quad strips between rings.
    const int m = L.ring_size;
    auto rv = [&](int ring, int i) {
      return static_cast<std::uint32_t>(ring0 + ring * m + (i % m));
    };
    for (int i = 0; i < m; ++i)
      faces.push_back({static_cast<std::uint32_t>(apex_a), rv(0, i + 1), rv(0, i)});
    const int rings = static_cast<int>(center.size());
    for (int ring = 0; ring + 1 < rings; ++ring) {
      for (int i = 0; i < m; ++i) {
        faces.push_back({rv(ring, i), rv(ring, i + 1), rv(ring + 1, i)});
        faces.push_back({rv(ring, i + 1), rv(ring + 1, i + 1), rv(ring + 1, i)});
      }
    }
    for (int i = 0; i < m; ++i)
      faces.push_back(
          {static_cast<std::uint32_t>(apex_c), rv(rings - 1, i), rv(rings - 1, i + 1)});
  }

  BodyTemplate t;
  t.vertex_count = V;
  t.joint_count = kJoints;
  t.shape_dim = kShapeDim;
  t.rest_vertices = vertices;
  t.parent.assign(kParent, kParent + kJoints);
  t.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int e = 0; e < 3; ++e) t.faces(static_cast<Eigen::Index>(f), e) = faces[f][e];
  t.bone_capsule_radii = VecX(kBones);
  for (int b = 0; b < kBones; ++b) t.bone_capsule_radii[b] = kBoneRadius[b];
  for (int i = 0; i < kKeypointCount; ++i) t.keypoint_map[i] = kKeypointJoints[i];

  // Skinning: normalized inverse distance to the two nearest bone segments,
  // credited to each bone's driving joint (its parent-side joint).
  t.skinning_weights = MatX::Zero(V, kJoints);
  for (int v = 0; v < V; ++v) {
    const Vec3 p = vertices.row(v).transpose();
    int best = -1, second = -1;
    double d_best = 0, d_second = 0;
    for (int b = 0; b < kBones; ++b) {
      const double d =
          point_segment_distance(p, joint[kParent[b + 1]], joint[b + 1]);
      if (best < 0 || d < d_best) {
        second = best;
        d_second = d_best;
        best = b;
        d_best = d;
      } else if (second < 0 || d < d_second) {
        second = b;
        d_second = d;
      }
    }
    const double w1 = 1.0 / std::max(d_best, 1e-12);
    const double w2 = 1.0 / std::max(d_second, 1e-12);
    t.skinning_weights(v, kParent[best + 1]) += w1 / (w1 + w2);
    t.skinning_weights(v, kParent[second + 1]) += w2 / (w1 + w2);
  }

  // Joint regressor: uniform average over the tube end rings meeting at the
  // joint; every such ring is centered exactly on the joint.
  t.joint_regressor = MatX::Zero(kJoints, V);
  for (int k = 0; k < kJoints; ++k) {
    std::vector<int> members;
    for (int b = 0; b < kBones; ++b) {
      const BoneLayout& L = layout[b];
      if (kParent[b + 1] == k) {
        for (int i = 0; i < L.ring_size; ++i)
          members.push_back(L.tube_ring_start + i);
      }
      if (b + 1 == k) {
        const int last_ring = L.tube_ring_start + (L.tube_rings - 1) * L.ring_size;
        for (int i = 0; i < L.ring_size; ++i) members.push_back(last_ring + i);
      }
    }
    for (int v : members)
      t.joint_regressor(k, v) = 1.0 / static_cast<double>(members.size());
  }

  // Ten interpretable shape directions (meters per unit coefficient).
  t.shape_basis = MatX::Zero(3 * V, kShapeDim);
  const double y_hip = joint[1].y();
  const double x_shoulder = joint[16].x();
  const Vec3 head = joint[15];
  for (int v = 0; v < V; ++v) {
    const Vec3 p = vertices.row(v).transpose();
    const int b = vertex_bone[v];
    const int child = b + 1;
    auto set = [&](int col, const Vec3& d) {
      t.shape_basis.block<3, 1>(3 * v, col) = d;
    };
    set(0, Vec3(0, 0.02 * p.y(), 0));  // overall height
    if (is_torso_child(child))          // girth: radial about the torso axis
      set(1, 0.04 * Vec3(p.x(), 0, p.z()));
    if (is_leg_child(child))            // leg length
      set(2, Vec3(0, 0.02 * (p.y() - y_hip), 0));
    if (is_arm_child(child))            // arm length
      set(3, Vec3(0.10 * (p.x() >= 0 ? 1 : -1) *
                      std::max(0.0, std::abs(p.x()) - x_shoulder),
                  0, 0));
    if (is_torso_child(child)) {
      set(4, Vec3(0.04 * p.x(), 0, 0));  // torso width
      set(5, Vec3(0, 0, 0.04 * p.z()));  // torso depth
    }
    if (child == 15) set(6, 0.05 * (p - head));  // head size
    if (is_arm_child(child) || is_collar_child(child))
      set(7, Vec3(0.03 * (p.x() >= 0 ? 1 : -1), 0, 0));  // shoulder width
    if (is_arm_child(child) || is_leg_child(child)) {    // limb thickness
      const Vec3 axis_pt =
          closest_segment_point(p, joint[kParent[child]], joint[child]);
      set(8, 0.15 * (p - axis_pt));
    }
    if (is_lower_torso_child(child))    // belly
      set(9, Vec3(0, 0, 0.06 * std::max(0.0, p.z())));
  }

  t.pose_basis = MatX::Zero(3 * V, t.pose_dim());

  t.validate();
  return t;
}

}  // namespace mvb
