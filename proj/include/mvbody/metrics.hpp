#pragma once

#include "mvbody/body_model.hpp"
#include "mvbody/common.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mvb {

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

struct ProcrustesResult {
  SimilarityTransform transform;
  Points3 aligned;  // transform applied to pred
};

/// Least-squares similarity alignment of pred onto gt (closed form via the
/// cross-covariance SVD, with reflection guard). Set with_scale=false for a
/// strictly rigid alignment. Throws on fewer than 3 points or on
/// collinear/coincident configurations.
ProcrustesResult procrustes_align(const Points3& pred, const Points3& gt,
                                  bool with_scale = true);

/// Per-joint Euclidean errors in millimeters.
std::vector<double> per_joint_errors_mm(const Points3& pred, const Points3& gt);

/// Mean per-joint position error, millimeters.
double mpjpe_mm(const Points3& pred, const Points3& gt);

/// mpjpe after Procrustes alignment of pred onto gt.
double pa_mpjpe_mm(const Points3& pred, const Points3& gt, bool with_scale = true);

/// Fraction of errors at or below the threshold.
double pck(const std::vector<double>& errors_mm, double threshold_mm);

/// Normalized trapezoidal area under the PCK curve over [0, max_threshold],
/// sampled at `samples` evenly spaced thresholds.
double auc(const std::vector<double>& errors_mm, double max_threshold_mm = 150.0,
           int samples = 31);

/// Symmetric Hausdorff distance between two point sets, meters. The default
/// reports the Euclidean distance; squared=true reports the squared form.
/// Uses a uniform-grid accelerated nearest neighbor that matches the
/// brute-force scan bit for bit.
double hausdorff(const Points3& a, const Points3& b, bool squared = false);

/// Reference O(n*m) implementation, kept for cross-checking the grid path.
double hausdorff_bruteforce(const Points3& a, const Points3& b,
                            bool squared = false);

/// Tailor-style body measurements, meters.
struct TapeMeasurements {
  double neck = 0, arm = 0, leg = 0, chest = 0, waist = 0, hip = 0;

  std::array<double, 6> as_array() const { return {neck, arm, leg, chest, waist, hip}; }
  static const std::array<const char*, 6>& names();
};

/// Measures a rest-pose mesh: arm/leg as summed joint segment lengths
/// (left/right averaged), neck/chest/waist/hip as convex-hull perimeters of
/// mesh cross sections. Planes sit at the template's section fractions of
/// the ankle-to-head keypoint span along the torso axis, so measurements
/// scale homogeneously with the mesh. Throws if a plane misses the mesh,
/// naming the measurement.
TapeMeasurements tape_measurements(const Mesh& mesh, const BodyTemplate& t);

struct RelativeErrors {
  std::array<double, 6> percent{};  // 100*|pred-gt|/gt per measurement
  double mean_percent = 0;
};
RelativeErrors relative_errors(const TapeMeasurements& pred,
                               const TapeMeasurements& gt);

/// Aggregate evaluation record for one instance (or a mean row).
struct MetricsReport {
  double mpjpe_mm = 0;
  double pa_mpjpe_mm = 0;
  double pck_at_150mm = 0;
  double auc_0_150 = 0;
  std::optional<double> hausdorff_mm;
  std::optional<TapeMeasurements> measurements;
  std::optional<RelativeErrors> measurement_rel_errors;
};

}  // namespace mvb
