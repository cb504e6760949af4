#include "mvbody/camera.hpp"

#include "mvbody/body_model.hpp"

#include <cmath>

namespace mvb {

void CameraParams::canonicalize_rotation() {
  const double angle = rotation.norm();
  if (angle > M_PI) {
    // Wrap the angle into (-pi, pi] along the same axis.
    double wrapped = std::fmod(angle, 2.0 * M_PI);
    if (wrapped > M_PI) wrapped -= 2.0 * M_PI;
    rotation *= wrapped / angle;
  }
}

Points2 project(const CameraParams& camera, const Points3& points) {
  const Mat3 R = rodrigues(camera.rotation);
  Points2 out(points.rows(), 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Vec3 p = points.row(i).transpose();
    const Vec3 q = R * p;
    out(i, 0) = camera.scale * q.x() + camera.translation.x();
    out(i, 1) = camera.scale * q.y() + camera.translation.y();
  }
  return out;
}

ProjectionJacobian projection_jacobian(const CameraParams& camera,
                                       const Points3& points) {
  const Mat3 R = rodrigues(camera.rotation);
  const auto dR = rodrigues_jacobian(camera.rotation);
  const Eigen::Index n = points.rows();
  ProjectionJacobian jac;
  jac.d_camera = MatX::Zero(2 * n, 6);
  jac.d_point = MatX::Zero(2 * n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = points.row(i).transpose();
    const Vec3 q = R * p;
    // d / d log s: the scaled rotated point, i.e. projection minus t.
    jac.d_camera(2 * i + 0, 0) = camera.scale * q.x();
    jac.d_camera(2 * i + 1, 0) = camera.scale * q.y();
    for (int a = 0; a < 3; ++a) {
      const Vec3 dq = dR[a] * p;
      jac.d_camera(2 * i + 0, 1 + a) = camera.scale * dq.x();
      jac.d_camera(2 * i + 1, 1 + a) = camera.scale * dq.y();
    }
    jac.d_camera(2 * i + 0, 4) = 1.0;
    jac.d_camera(2 * i + 1, 5) = 1.0;
    jac.d_point.block<2, 3>(2 * i, 0) = camera.scale * R.topRows<2>();
  }
  return jac;
}

std::vector<CameraParams> canonical_views(int n) {
  require(n >= 1, "canonical_views: need at least one view");
  std::vector<double> yaws;
  if (n == 4) {
    yaws = {0.0, M_PI, 0.5 * M_PI, 1.5 * M_PI};  // front, back, left, right
  } else {
    for (int i = 0; i < n; ++i) yaws.push_back(2.0 * M_PI * i / n);
  }
  std::vector<CameraParams> views;
  views.reserve(yaws.size());
  for (double yaw : yaws) {
    CameraParams c;
    c.rotation = Vec3(0.0, yaw, 0.0);
    c.canonicalize_rotation();
    views.push_back(c);
  }
  return views;
}

}  // namespace mvb
