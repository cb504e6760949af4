#pragma once

#include "mvbody/common.hpp"

#include <vector>

namespace mvb {

/// Weak-perspective (scaled orthographic) camera. The rotation is the full
/// 3D orientation whose top two rows form the 2x3 projection; it also
/// absorbs the body's global rotation for its view.
struct CameraParams {
  double scale = 1.0;                 // pixels per meter, > 0
  Vec3 rotation = Vec3::Zero();       // axis-angle, |rotation| in [0, pi]
  Vec2 translation = Vec2::Zero();    // pixels

  /// Wraps the axis-angle back into the [0, pi] canonical ball.
  void canonicalize_rotation();
};

/// points (N x 3, meters) -> pixels: row i = s * R[0:2,:] * p_i + t.
Points2 project(const CameraParams& camera, const Points3& points);

/// Derivatives of the 2N projected coordinates (row-major per point).
/// d_camera columns: (log s, r_x, r_y, r_z, t_x, t_y).
/// d_point holds the 2x3 block of output pair i w.r.t. its own point
/// (outputs do not depend on other points).
struct ProjectionJacobian {
  MatX d_camera;  // 2N x 6
  MatX d_point;   // 2N x 3, block rows
};
ProjectionJacobian projection_jacobian(const CameraParams& camera,
                                       const Points3& points);

/// Deterministic yaw-only camera rig about the vertical axis, scale 1,
/// zero translation. n=4 gives front/back/left/right (0, 180, 90, 270
/// degrees, in that order); any other n gives evenly spaced yaws from 0.
std::vector<CameraParams> canonical_views(int n);

}  // namespace mvb
