#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvbody/body_model.hpp"
#include "mvbody/camera.hpp"
#include "oracles.hpp"

using namespace mvb;

namespace {

CameraParams random_camera(Rng& rng) {
  CameraParams cam;
  cam.scale = std::exp(rng.uniform(-1.0, 1.5));
  cam.rotation = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  cam.canonicalize_rotation();
  cam.translation = Vec2(rng.uniform(-100, 100), rng.uniform(-100, 100));
  return cam;
}

Points3 random_points(Rng& rng, int n) {
  Points3 pts(n, 3);
  for (int i = 0; i < n; ++i)
    pts.row(i) =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).transpose();
  return pts;
}

}  // namespace

TEST_CASE("identity camera drops the depth coordinate") {
  CameraParams cam;
  Points3 p(1, 3);
  p << 1, 2, 3;
  const Points2 out = project(cam, p);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
}

TEST_CASE("scale and translation act affinely") {
  CameraParams cam;
  cam.scale = 2.0;
  cam.translation = Vec2(1, 1);
  Points3 p(1, 3);
  p << 1, 2, 3;
  const Points2 out = project(cam, p);
  CHECK(out(0, 0) == 3.0);
  CHECK(out(0, 1) == 5.0);
}

TEST_CASE("projection matches full-rotation-then-truncate oracle") {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const CameraParams cam = random_camera(rng);
    const Points3 pts = random_points(rng, 8);
    const Points2 ours = project(cam, pts);
    const Points2 ref = oracle::project_reference(cam, pts);
    CHECK((ours - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("projection is linear in the 3D point for a fixed camera") {
  Rng rng(32);
  const CameraParams cam = random_camera(rng);
  const Points3 P = random_points(rng, 1), Q = random_points(rng, 1);
  const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
  const Points3 combo = a * P + b * Q;
  const Points2 lhs = project(cam, combo);
  const Points2 rhs = a * project(cam, P) + b * project(cam, Q);
  const Vec2 correction = (a + b - 1) * cam.translation;
  CHECK((lhs.row(0).transpose() - (rhs.row(0).transpose() - correction)).norm() <
        1e-12);
}

TEST_CASE("translating along the optical axis leaves projections unchanged") {
  Rng rng(33);
  for (int i = 0; i < 20; ++i) {
    const CameraParams cam = random_camera(rng);
    const Points3 pts = random_points(rng, 6);
    const Mat3 R = rodrigues(cam.rotation);
    const Vec3 optical_axis = R.row(2).transpose();
    Points3 shifted = pts;
    const double depth = rng.uniform(-5, 5);
    for (int r = 0; r < shifted.rows(); ++r)
      shifted.row(r) += depth * optical_axis.transpose();
    CHECK((project(cam, pts) - project(cam, shifted)).cwiseAbs().maxCoeff() <
          1e-12);
  }
}

TEST_CASE("jacobian blocks match their closed forms at zero rotation") {
  CameraParams cam;
  cam.scale = 3.0;
  cam.translation = Vec2(5, -2);
  Points3 pts(2, 3);
  pts << 1, 2, 3, -1, 0.5, 2;
  const ProjectionJacobian jac = projection_jacobian(cam, pts);
  const Points2 proj = project(cam, pts);
  for (int i = 0; i < 2; ++i) {
    // d/dt is the identity block.
    CHECK(jac.d_camera(2 * i + 0, 4) == 1.0);
    CHECK(jac.d_camera(2 * i + 1, 5) == 1.0);
    CHECK(jac.d_camera(2 * i + 0, 5) == 0.0);
    // d/d(log s) equals projection minus translation.
    CHECK(jac.d_camera(2 * i + 0, 0) ==
          doctest::Approx(proj(i, 0) - cam.translation.x()).epsilon(1e-12));
    CHECK(jac.d_camera(2 * i + 1, 0) ==
          doctest::Approx(proj(i, 1) - cam.translation.y()).epsilon(1e-12));
  }
}

TEST_CASE("jacobian agrees with central finite differences on 100 configurations") {
  Rng rng(34);
  const double h = 1e-6;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const CameraParams cam = random_camera(rng);
    const Points3 pts = random_points(rng, 4);
    const ProjectionJacobian jac = projection_jacobian(cam, pts);
    for (int col = 0; col < 6; ++col) {
      CameraParams lo = cam, hi = cam;
      if (col == 0) {
        lo.scale = cam.scale * std::exp(-h);
        hi.scale = cam.scale * std::exp(h);
      } else if (col <= 3) {
        lo.rotation[col - 1] -= h;
        hi.rotation[col - 1] += h;
      } else {
        lo.translation[col - 4] -= h;
        hi.translation[col - 4] += h;
      }
      const Points2 plo = project(lo, pts), phi = project(hi, pts);
      for (int i = 0; i < pts.rows(); ++i)
        for (int c = 0; c < 2; ++c) {
          const double fd = (phi(i, c) - plo(i, c)) / (2 * h);
          const double an = jac.d_camera(2 * i + c, col);
          worst = std::max(worst, std::abs(an - fd) /
                                      std::max(1.0, std::abs(an) + std::abs(fd)));
        }
    }
    for (int i = 0; i < pts.rows(); ++i)
      for (int axis = 0; axis < 3; ++axis) {
        Points3 lo = pts, hi = pts;
        lo(i, axis) -= h;
        hi(i, axis) += h;
        const Points2 plo = project(cam, lo), phi = project(cam, hi);
        for (int c = 0; c < 2; ++c) {
          const double fd = (phi(i, c) - plo(i, c)) / (2 * h);
          const double an = jac.d_point(2 * i + c, axis);
          worst = std::max(worst, std::abs(an - fd) /
                                      std::max(1.0, std::abs(an) + std::abs(fd)));
        }
      }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("canonical views: single view is the identity yaw") {
  const auto views = canonical_views(1);
  REQUIRE(views.size() == 1);
  CHECK(views[0].rotation.norm() == 0.0);
  CHECK(views[0].scale == 1.0);
  CHECK(views[0].translation.norm() == 0.0);
}

TEST_CASE("canonical views: four views are front, back, left, right") {
  const auto views = canonical_views(4);
  REQUIRE(views.size() == 4);
  const double expected[4] = {0.0, M_PI, 0.5 * M_PI, -0.5 * M_PI};
  for (int i = 0; i < 4; ++i) {
    CHECK(views[i].rotation.x() == 0.0);
    CHECK(views[i].rotation.z() == 0.0);
    CHECK(views[i].rotation.y() == doctest::Approx(expected[i]).epsilon(1e-15));
  }
}

TEST_CASE("canonical views: eight views sit at 45 degree spacing") {
  const auto views = canonical_views(8);
  REQUIRE(views.size() == 8);
  Points3 x_axis(1, 3);
  x_axis << 1, 0, 0;
  for (int i = 0; i < 8; ++i) {
    const double yaw = 2.0 * M_PI * i / 8;
    // Under a yaw about +y, the +x unit vector projects to (cos yaw, 0).
    const Points2 p = project(views[i], x_axis);
    CHECK(p(0, 0) == doctest::Approx(std::cos(yaw)).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("rotation canonicalization wraps into the [0, pi] ball") {
  CameraParams cam;
  cam.rotation = Vec3(0, 1.5 * M_PI, 0);
  cam.canonicalize_rotation();
  CHECK(cam.rotation.norm() <= M_PI + 1e-15);
  // Same rotation, opposite axis representation.
  CHECK(cam.rotation.y() == doctest::Approx(-0.5 * M_PI).epsilon(1e-12));
}
