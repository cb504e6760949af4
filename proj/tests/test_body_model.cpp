#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvbody/body_model.hpp"
#include "mvbody/metrics.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace mvb;

namespace {

BodyParams random_params(const BodyTemplate& t, Rng& rng, double pose_range,
                         double shape_range) {
  BodyParams p = BodyParams::zero(t);
  for (Eigen::Index j = 0; j < p.pose.rows(); ++j)
    for (int c = 0; c < 3; ++c) p.pose(j, c) = rng.uniform(-pose_range, pose_range);
  for (Eigen::Index b = 0; b < p.shape.size(); ++b)
    p.shape[b] = rng.uniform(-shape_range, shape_range);
  return p;
}

const BodyTemplate& mini() {
  static const BodyTemplate t = make_mini_template({600, 7});
  return t;
}

}  // namespace

TEST_CASE("rodrigues maps the zero vector to the identity") {
  CHECK((rodrigues(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("rodrigues half turn about z flips x") {
  const Vec3 out = rodrigues(Vec3(0, 0, M_PI)) * Vec3(1, 0, 0);
  CHECK((out - Vec3(-1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("rodrigues matches the quaternion composition oracle") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Vec3 r(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK((rodrigues(r) - oracle::rotation_via_quaternion(r)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("rodrigues outputs proper rotations, including tiny angles") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const double mag = i < 50 ? rng.uniform(0, 1e-7) : rng.uniform(0, M_PI);
    Vec3 axis(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (axis.norm() == 0) axis = Vec3::UnitX();
    const Mat3 R = rodrigues(mag * axis.normalized());
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rodrigues_jacobian matches central differences") {
  Rng rng(13);
  const double h = 1e-7;
  for (int i = 0; i < 50; ++i) {
    Vec3 r(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    if (i == 0) r.setZero();
    if (i == 1) r = Vec3(1e-9, -2e-9, 5e-10);
    const auto dR = rodrigues_jacobian(r);
    for (int a = 0; a < 3; ++a) {
      Vec3 lo = r, hi = r;
      lo[a] -= h;
      hi[a] += h;
      const Mat3 fd = (rodrigues(hi) - rodrigues(lo)) / (2 * h);
      CHECK((dR[a] - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("pose_feature is zero at rest and local to the rotated joint") {
  const auto& t = mini();
  BodyParams p = BodyParams::zero(t);
  CHECK(pose_feature(t, p).norm() == 0.0);

  p.pose(4, 2) = M_PI / 2;  // joint 5, slots 9*4..9*4+8
  const VecX f = pose_feature(t, p);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (i >= 36 && i < 45) continue;
    CHECK(f[i] == 0.0);
  }
  CHECK(f.segment(36, 9).norm() > 0.1);
}

TEST_CASE("pose_feature matches per-joint rodrigues-minus-identity") {
  const auto& t = mini();
  Rng rng(14);
  const BodyParams p = random_params(t, rng, 1.5, 0);
  const VecX f = pose_feature(t, p);
  for (int j = 0; j < t.joint_count - 1; ++j) {
    const Mat3 d = oracle::rotation_via_quaternion(p.pose.row(j)) - Mat3::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(f[9 * j + 3 * r + c] == doctest::Approx(d(r, c)).epsilon(1e-12));
  }
}

TEST_CASE("shape_mesh: zero coefficients reproduce the rest vertices") {
  const auto& t = mini();
  const Mesh m = shape_mesh(t, VecX::Zero(t.shape_dim));
  CHECK((m.vertices - t.rest_vertices).norm() == 0.0);
}

TEST_CASE("shape_mesh: unit basis vector adds exactly one basis column") {
  const auto& t = mini();
  VecX shape = VecX::Zero(t.shape_dim);
  shape[0] = 1.0;
  const Mesh m = shape_mesh(t, shape);
  for (int v = 0; v < t.vertex_count; ++v)
    for (int c = 0; c < 3; ++c)
      CHECK(m.vertices(v, c) ==
            doctest::Approx(t.rest_vertices(v, c) + t.shape_basis(3 * v + c, 0))
                .epsilon(1e-15));
}

TEST_CASE("shape_mesh matches the brute-force matvec oracle") {
  const auto& t = mini();
  Rng rng(15);
  VecX shape(t.shape_dim);
  for (Eigen::Index b = 0; b < shape.size(); ++b) shape[b] = rng.uniform(-2, 2);
  const Mesh m = shape_mesh(t, shape);
  for (int v = 0; v < t.vertex_count; ++v)
    for (int c = 0; c < 3; ++c) {
      double expected = t.rest_vertices(v, c);
      for (int b = 0; b < t.shape_dim; ++b)
        expected += t.shape_basis(3 * v + c, b) * shape[b];
      CHECK(m.vertices(v, c) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("shape_mesh rejects a wrong-length coefficient vector") {
  CHECK_THROWS(shape_mesh(mini(), VecX::Zero(3)));
}

TEST_CASE("regress_joints: one-hot rows select vertices, uniform rows average") {
  auto t = oracle::make_chain_template(3, 2);
  Mesh mesh{t.rest_vertices, t.faces};

  t.joint_regressor.setZero();
  t.joint_regressor(0, 5) = 1.0;
  t.joint_regressor(1, 0) = 1.0;
  t.joint_regressor(2, 11) = 1.0;
  Points3 joints = regress_joints(t, mesh);
  CHECK((joints.row(0) - mesh.vertices.row(5)).norm() == 0.0);
  CHECK((joints.row(1) - mesh.vertices.row(0)).norm() == 0.0);

  t.joint_regressor.setConstant(1.0 / t.vertex_count);
  joints = regress_joints(t, mesh);
  const Vec3 centroid = mesh.vertices.colwise().mean().transpose();
  CHECK((joints.row(0).transpose() - centroid).norm() < 1e-14);
}

TEST_CASE("regress_joints matches a naive matmul") {
  const auto& t = mini();
  Rng rng(16);
  Mesh mesh{t.rest_vertices, t.faces};
  for (int v = 0; v < t.vertex_count; ++v)
    for (int c = 0; c < 3; ++c) mesh.vertices(v, c) += rng.uniform(-0.1, 0.1);
  const Points3 joints = regress_joints(t, mesh);
  const MatX expected = oracle::naive_matmul(t.joint_regressor, mesh.vertices);
  CHECK((joints - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("global_transforms are identity maps at the rest pose") {
  const auto& t = mini();
  const BodyParams p = BodyParams::zero(t);
  const Points3 joints = regress_joints(t, shape_mesh(t, p.shape));
  const auto g = global_transforms(t, p, joints);
  for (int k = 0; k < t.joint_count; ++k) {
    const Vec3 jk = joints.row(k).transpose();
    CHECK((g[static_cast<std::size_t>(k)].apply(jk) - jk).norm() < 1e-12);
    CHECK((g[static_cast<std::size_t>(k)].R - Mat3::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("rotating one joint moves its subtree rigidly") {
  const auto& t = mini();
  BodyParams p = BodyParams::zero(t);
  // Joint 1 (l_hip) through 90 degrees about x: the left leg subtree must
  // rotate rigidly about the hip.
  p.pose(0, 0) = M_PI / 2;
  const Points3 rest = joints3d(t, BodyParams::zero(t));
  const Points3 posed = joints3d(t, p);
  const Mat3 R = rodrigues(Vec3(M_PI / 2, 0, 0));
  const Vec3 pivot = rest.row(1).transpose();
  for (int k : {4, 7, 10}) {  // l_knee, l_ankle, l_foot
    const Vec3 expected = R * (rest.row(k).transpose() - pivot) + pivot;
    CHECK((posed.row(k).transpose() - expected).norm() < 1e-12);
  }
  // Joints outside the subtree stay put.
  for (int k : {0, 2, 3, 5, 12, 16}) {
    CHECK((posed.row(k) - rest.row(k)).norm() < 1e-12);
  }
}

TEST_CASE("chain tip matches hand-composed rotations about each joint") {
  const auto t = oracle::make_chain_template(4, 0);
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    const BodyParams p = random_params(t, rng, 1.2, 0);
    const Points3 rest = joints3d(t, BodyParams::zero(t));
    const Points3 posed = joints3d(t, p);
    // Each rotation acts about its own joint: the tip of 0->1->2->3 is
    // j1 + R1 (j2 - j1) + R1 R2 (j3 - j2).
    const Mat3 R1 = oracle::rotation_via_quaternion(p.pose.row(0));
    const Mat3 R2 = oracle::rotation_via_quaternion(p.pose.row(1));
    const Vec3 j1 = rest.row(1).transpose(), j2 = rest.row(2).transpose(),
               j3 = rest.row(3).transpose();
    const Vec3 mid = j1 + R1 * (j2 - j1);
    const Vec3 tip = mid + R1 * (R2 * (j3 - j2));
    CHECK((posed.row(2).transpose() - mid).norm() < 1e-12);
    CHECK((posed.row(3).transpose() - tip).norm() < 1e-12);
  }
}

TEST_CASE("skin at the rest configuration returns the rest vertices") {
  const auto& t = mini();
  const Mesh m = skin(t, BodyParams::zero(t));
  CHECK((m.vertices - t.rest_vertices).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("skin with zero pose equals shape_mesh") {
  const auto& t = mini();
  Rng rng(18);
  BodyParams p = BodyParams::zero(t);
  for (Eigen::Index b = 0; b < p.shape.size(); ++b) p.shape[b] = rng.uniform(-2, 2);
  const Mesh skinned = skin(t, p);
  const Mesh shaped = shape_mesh(t, p.shape);
  CHECK((skinned.vertices - shaped.vertices).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("skin matches the per-vertex oracle, including a nonzero pose basis") {
  auto t = mini();
  Rng rng(19);
  for (Eigen::Index i = 0; i < t.pose_basis.rows(); ++i)
    for (Eigen::Index j = 0; j < t.pose_basis.cols(); ++j)
      t.pose_basis(i, j) = rng.uniform(-2e-4, 2e-4);
  for (int i = 0; i < 10; ++i) {
    const BodyParams p = random_params(t, rng, 1.0, 2.0);
    const Mesh m = skin(t, p);
    const Points3 expected = oracle::lbs_reference(t, p);
    CHECK((m.vertices - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("joints3d: rest pose, pure shape, and random parameters") {
  const auto& t = mini();
  const Points3 rest = joints3d(t, BodyParams::zero(t));
  const Points3 reg = regress_joints(t, shape_mesh(t, VecX::Zero(t.shape_dim)));
  CHECK((rest - reg).cwiseAbs().maxCoeff() < 1e-12);

  Rng rng(20);
  BodyParams shape_only = BodyParams::zero(t);
  for (Eigen::Index b = 0; b < shape_only.shape.size(); ++b)
    shape_only.shape[b] = rng.uniform(-2, 2);
  const Points3 shaped_joints = joints3d(t, shape_only);
  const Points3 expected = regress_joints(t, shape_mesh(t, shape_only.shape));
  CHECK((shaped_joints - expected).cwiseAbs().maxCoeff() < 1e-12);

  for (int i = 0; i < 10; ++i) {
    const BodyParams p = random_params(t, rng, 1.0, 2.0);
    CHECK((joints3d(t, p) - oracle::joints_reference(t, p)).cwiseAbs().maxCoeff() <
          1e-10);
  }
}

TEST_CASE("skinning is linear in shape at zero pose") {
  const auto& t = mini();
  Rng rng(21);
  BodyParams p1 = BodyParams::zero(t), p2 = BodyParams::zero(t),
             p12 = BodyParams::zero(t);
  for (Eigen::Index b = 0; b < p1.shape.size(); ++b) {
    p1.shape[b] = rng.uniform(-1.5, 1.5);
    p2.shape[b] = rng.uniform(-1.5, 1.5);
    p12.shape[b] = p1.shape[b] + p2.shape[b];
  }
  const Points3 sum = skin(t, p1).vertices + skin(t, p2).vertices;
  const Points3 combined = skin(t, p12).vertices + t.rest_vertices;
  CHECK((sum - combined).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("composing a rigid transform into all joint transforms moves the skin rigidly") {
  const auto& t = mini();
  Rng rng(22);
  const BodyParams p = random_params(t, rng, 0.8, 1.5);

  Mesh shaped = shape_mesh(t, p.shape);
  const Points3 rest_joints = regress_joints(t, shaped);
  auto g = global_transforms(t, p, rest_joints);
  const Points3 base = skin_with_transforms(t, shaped.vertices, g);

  const Transform rigid{rodrigues(Vec3(0.3, -0.8, 0.5)), Vec3(0.2, 1.0, -0.4)};
  auto composed = g;
  for (auto& gk : composed) gk = rigid.compose(gk);
  const Points3 moved = skin_with_transforms(t, shaped.vertices, composed);
  for (int v = 0; v < t.vertex_count; ++v) {
    const Vec3 expected = rigid.apply(base.row(v).transpose());
    CHECK((moved.row(v).transpose() - expected).norm() < 1e-9);
  }
}

TEST_CASE("joint jacobians match central finite differences") {
  const auto& t = mini();
  Rng rng(23);
  const double h = 1e-6;
  double worst = 0;
  for (int draw = 0; draw < 20; ++draw) {
    const BodyParams p = random_params(t, rng, 0.8, 2.0);
    const JointJacobians jac = joints3d_jacobian(t, p);
    const int np = 3 * (t.joint_count - 1);
    for (int i = 0; i < np + t.shape_dim; ++i) {
      BodyParams lo = p, hi = p;
      if (i < np) {
        lo.pose(i / 3, i % 3) -= h;
        hi.pose(i / 3, i % 3) += h;
      } else {
        lo.shape[i - np] -= h;
        hi.shape[i - np] += h;
      }
      const Points3 jlo = joints3d(t, lo), jhi = joints3d(t, hi);
      for (int k = 0; k < t.joint_count; ++k)
        for (int c = 0; c < 3; ++c) {
          const double fd = (jhi(k, c) - jlo(k, c)) / (2 * h);
          const double an =
              i < np ? jac.d_pose(3 * k + c, i) : jac.d_shape(3 * k + c, i - np);
          worst = std::max(worst,
                           std::abs(an - fd) / std::max(1.0, std::abs(an) + std::abs(fd)));
        }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("mini template passes its invariants and is seed-deterministic") {
  MiniTemplateConfig cfg{500, 99};
  const BodyTemplate a = make_mini_template(cfg);
  const BodyTemplate b = make_mini_template(cfg);
  CHECK(a.vertex_count == b.vertex_count);
  CHECK((a.rest_vertices - b.rest_vertices).norm() == 0.0);
  CHECK((a.skinning_weights - b.skinning_weights).norm() == 0.0);
  CHECK((a.joint_regressor - b.joint_regressor).norm() == 0.0);
  CHECK((a.shape_basis - b.shape_basis).norm() == 0.0);

  const BodyTemplate c = make_mini_template({500, 100});
  CHECK((a.rest_vertices - c.rest_vertices).norm() > 0.0);
}

TEST_CASE("mini template rejects vertex targets below 4K") {
  CHECK_THROWS_AS(make_mini_template({90, 0}), config_error);
}

TEST_CASE("girth direction grows every torso section, limbs untouched") {
  const auto& t = mini();
  BodyParams fat = BodyParams::zero(t);
  fat.shape[1] = 3.0;
  const TapeMeasurements base = tape_measurements(skin(t, BodyParams::zero(t)), t);
  const TapeMeasurements grown = tape_measurements(skin(t, fat), t);
  CHECK(grown.neck > base.neck);
  CHECK(grown.chest > base.chest);
  CHECK(grown.waist > base.waist);
  CHECK(grown.hip > base.hip);
  CHECK(grown.arm == doctest::Approx(base.arm).epsilon(1e-9));
  CHECK(grown.leg == doctest::Approx(base.leg).epsilon(1e-9));
}

TEST_CASE("template round-trips bit-exactly in both container formats") {
  const auto& t = mini();
  const auto dir = std::filesystem::temp_directory_path() / "mvbody_tmpl_test";
  std::filesystem::create_directories(dir);

  for (auto format : {TemplateFormat::binary, TemplateFormat::json}) {
    const auto path = dir / (format == TemplateFormat::binary ? "t.mvbt" : "t.json");
    save_template(t, path, format);
    const BodyTemplate back = load_template(path);
    CHECK(back.vertex_count == t.vertex_count);
    CHECK((back.rest_vertices - t.rest_vertices).norm() == 0.0);
    CHECK((back.shape_basis - t.shape_basis).norm() == 0.0);
    CHECK((back.pose_basis - t.pose_basis).norm() == 0.0);
    CHECK((back.skinning_weights - t.skinning_weights).norm() == 0.0);
    CHECK((back.joint_regressor - t.joint_regressor).norm() == 0.0);
    CHECK(back.parent == t.parent);
    CHECK((back.faces - t.faces).cwiseAbs().maxCoeff() == 0);
    CHECK(back.keypoint_map == t.keypoint_map);
    CHECK((back.bone_capsule_radii - t.bone_capsule_radii).norm() == 0.0);
    CHECK(back.section_fractions == t.section_fractions);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("loader rejects a bad skinning row, naming the field") {
  const auto& t = mini();
  const auto dir = std::filesystem::temp_directory_path() / "mvbody_tmpl_bad";
  std::filesystem::create_directories(dir);
  const auto path = dir / "bad.json";
  save_template(t, path, TemplateFormat::json);

  // Corrupt one skinning row in the file so it sums to 0.9.
  nlohmann::json j;
  {
    std::ifstream is(path);
    is >> j;
  }
  int col = 0;
  for (int k = 1; k < t.joint_count; ++k) {
    if (j["skinning_weights"][0][k].get<double>() >
        j["skinning_weights"][0][col].get<double>())
      col = k;
  }
  j["skinning_weights"][0][col] =
      j["skinning_weights"][0][col].get<double>() - 0.1;
  {
    std::ofstream os(path);
    os << j.dump();
  }

  bool named = false;
  try {
    load_template(path);
  } catch (const io_error& e) {
    named = std::string(e.what()).find("skinning_weights") != std::string::npos;
  }
  CHECK(named);
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated binary template fails with a parse error, not a crash") {
  const auto& t = mini();
  const auto dir = std::filesystem::temp_directory_path() / "mvbody_tmpl_trunc";
  std::filesystem::create_directories(dir);
  const auto path = dir / "t.mvbt";
  save_template(t, path, TemplateFormat::binary);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_template(path), io_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical inputs produce bit-identical outputs") {
  const auto& t = mini();
  Rng rng(24);
  const BodyParams p = random_params(t, rng, 1.0, 2.0);
  const Mesh a = skin(t, p), b = skin(t, p);
  CHECK((a.vertices - b.vertices).norm() == 0.0);
  const Points3 ja = joints3d(t, p), jb = joints3d(t, p);
  CHECK((ja - jb).norm() == 0.0);
}
