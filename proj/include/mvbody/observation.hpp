#pragma once

#include "mvbody/common.hpp"

#include <optional>
#include <vector>

namespace mvb {

/// Per-view joint observations: 2D keypoint detections with a visibility
/// mask, plus optional 3D joint supervision in the body frame.
struct ViewFeature {
  Points2 joints2d;                    // J x 2, pixels
  std::vector<bool> visibility;        // J
  std::optional<Points3> joints3d;     // J x 3, meters, body frame
  std::vector<bool> joints3d_mask;     // J when joints3d is set
  int view_id = 0;

  int keypoint_count() const { return static_cast<int>(joints2d.rows()); }
  int visible_count() const {
    int n = 0;
    for (bool v : visibility) n += v ? 1 : 0;
    return n;
  }
};

using MultiViewObservation = std::vector<ViewFeature>;

}  // namespace mvb
