#include "mvbody/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mvb {

namespace {

// Shared by the brute-force and grid paths so both compute identical values.
inline double sqdist(const Vec3& a, const Vec3& b) {
  return (a - b).squaredNorm();
}

Vec3 any_perpendicular(const Vec3& d) {
  const Vec3 axis = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return d.cross(axis).normalized();
}

}  // namespace

ProcrustesResult procrustes_align(const Points3& pred, const Points3& gt,
                                  bool with_scale) {
  const Eigen::Index n = pred.rows();
  require(n == gt.rows(), "procrustes: point counts differ");
  require(n >= 3, "procrustes: need at least 3 points");

  const Vec3 mu_p = pred.colwise().mean().transpose();
  const Vec3 mu_g = gt.colwise().mean().transpose();
  const Points3 X = pred.rowwise() - mu_p.transpose();
  const Points3 Y = gt.rowwise() - mu_g.transpose();

  const double var_p = X.squaredNorm() / static_cast<double>(n);
  require(var_p > 0.0, "procrustes: degenerate input, pred points coincident");

  const Mat3 cov = (Y.transpose() * X) / static_cast<double>(n);
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  require(d[0] > 0.0, "procrustes: degenerate input, gt points coincident");
  require(d[1] > 1e-12 * d[0],
          "procrustes: degenerate input, points are collinear");

  Vec3 s = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s[2] = -1;
  const Mat3 R = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  const double scale = with_scale ? (d.dot(s)) / var_p : 1.0;
  const Vec3 trans = mu_g - scale * (R * mu_p);

  ProcrustesResult result;
  result.transform = SimilarityTransform{scale, R, trans};
  result.aligned = (scale * (pred * R.transpose())).rowwise() + trans.transpose();
  return result;
}

std::vector<double> per_joint_errors_mm(const Points3& pred, const Points3& gt) {
  require(pred.rows() == gt.rows(), "per_joint_errors: shapes differ");
  std::vector<double> errors(static_cast<std::size_t>(pred.rows()));
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    errors[static_cast<std::size_t>(i)] = (pred.row(i) - gt.row(i)).norm() * 1000.0;
  return errors;
}

double mpjpe_mm(const Points3& pred, const Points3& gt) {
  const auto errors = per_joint_errors_mm(pred, gt);
  double sum = 0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

double pa_mpjpe_mm(const Points3& pred, const Points3& gt, bool with_scale) {
  return mpjpe_mm(procrustes_align(pred, gt, with_scale).aligned, gt);
}

double pck(const std::vector<double>& errors_mm, double threshold_mm) {
  require(!errors_mm.empty(), "pck: empty error list");
  int hits = 0;
  for (double e : errors_mm) hits += (e <= threshold_mm) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(errors_mm.size());
}

double auc(const std::vector<double>& errors_mm, double max_threshold_mm,
           int samples) {
  require(!errors_mm.empty(), "auc: empty error list");
  require(samples >= 2 && max_threshold_mm > 0, "auc: bad sampling parameters");
  double integral = 0;
  double prev = pck(errors_mm, 0.0);
  const double step = max_threshold_mm / (samples - 1);
  for (int i = 1; i < samples; ++i) {
    const double cur = pck(errors_mm, step * i);
    integral += 0.5 * (prev + cur) * step;
    prev = cur;
  }
  return integral / max_threshold_mm;
}

double hausdorff_bruteforce(const Points3& a, const Points3& b, bool squared) {
  require(a.rows() > 0 && b.rows() > 0, "hausdorff: empty point set");
  auto directed = [](const Points3& from, const Points3& to) {
    double worst = 0;
    for (Eigen::Index i = 0; i < from.rows(); ++i) {
      const Vec3 u = from.row(i).transpose();
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < to.rows(); ++j)
        best = std::min(best, sqdist(u, Vec3(to.row(j).transpose())));
      worst = std::max(worst, best);
    }
    return worst;
  };
  const double d = std::max(directed(a, b), directed(b, a));
  return squared ? d : std::sqrt(d);
}

namespace {

// Uniform grid over one point set for exact nearest-neighbor queries. The
// shell-expansion bound guarantees the reported minimum equals the full
// scan's, so grid and brute-force paths agree bitwise.
class PointGrid {
 public:
  explicit PointGrid(const Points3& pts) : pts_(pts) {
    lo_ = pts.colwise().minCoeff().transpose();
    const Vec3 hi = pts.colwise().maxCoeff().transpose();
    const double target =
        std::max(1.0, std::cbrt(static_cast<double>(pts.rows())));
    const double max_extent = (hi - lo_).maxCoeff();
    h_ = std::max(max_extent / target, 1e-12);
    for (int axis = 0; axis < 3; ++axis)
      dims_[axis] = std::max<Eigen::Index>(
          1, static_cast<Eigen::Index>((hi[axis] - lo_[axis]) / h_) + 1);
    cells_.resize(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]));
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      cells_[cell_index(coords(pts.row(i).transpose()))].push_back(i);
  }

  double min_sqdist(const Vec3& u) const {
    const std::array<Eigen::Index, 3> c = coords(u);
    double best = std::numeric_limits<double>::infinity();
    const Eigen::Index max_ring =
        std::max({dims_[0], dims_[1], dims_[2]});
    for (Eigen::Index ring = 0; ring <= max_ring; ++ring) {
      scan_shell(u, c, ring, best);
      if (std::isfinite(best)) {
        // Unscanned cells sit at Chebyshev index distance > ring, hence at
        // Euclidean distance >= ring * h from u.
        const double reach = h_ * static_cast<double>(ring);
        if (best <= reach * reach) break;
      }
    }
    return best;
  }

 private:
  std::array<Eigen::Index, 3> coords(const Vec3& p) const {
    std::array<Eigen::Index, 3> c;
    for (int axis = 0; axis < 3; ++axis) {
      const auto idx = static_cast<Eigen::Index>((p[axis] - lo_[axis]) / h_);
      c[axis] = std::clamp<Eigen::Index>(idx, 0, dims_[axis] - 1);
    }
    return c;
  }

  std::size_t cell_index(const std::array<Eigen::Index, 3>& c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  void scan_cell(const Vec3& u, const std::array<Eigen::Index, 3>& c,
                 double& best) const {
    for (Eigen::Index i : cells_[cell_index(c)])
      best = std::min(best, sqdist(u, Vec3(pts_.row(i).transpose())));
  }

  void scan_shell(const Vec3& u, const std::array<Eigen::Index, 3>& center,
                  Eigen::Index ring, double& best) const {
    const auto lo = [&](int axis) {
      return std::max<Eigen::Index>(0, center[axis] - ring);
    };
    const auto hi = [&](int axis) {
      return std::min<Eigen::Index>(dims_[axis] - 1, center[axis] + ring);
    };
    for (Eigen::Index x = lo(0); x <= hi(0); ++x)
      for (Eigen::Index y = lo(1); y <= hi(1); ++y)
        for (Eigen::Index z = lo(2); z <= hi(2); ++z) {
          const Eigen::Index cheb = std::max(
              {std::abs(x - center[0]), std::abs(y - center[1]),
               std::abs(z - center[2])});
          if (cheb != ring) continue;
          scan_cell(u, {x, y, z}, best);
        }
  }

  const Points3& pts_;
  Vec3 lo_;
  double h_ = 1.0;
  std::array<Eigen::Index, 3> dims_{1, 1, 1};
  std::vector<std::vector<Eigen::Index>> cells_;
};

double directed_grid(const Points3& from, const PointGrid& to_grid) {
  double worst = 0;
  for (Eigen::Index i = 0; i < from.rows(); ++i)
    worst = std::max(worst, to_grid.min_sqdist(from.row(i).transpose()));
  return worst;
}

}  // namespace

double hausdorff(const Points3& a, const Points3& b, bool squared) {
  require(a.rows() > 0 && b.rows() > 0, "hausdorff: empty point set");
  const PointGrid grid_a(a), grid_b(b);
  const double d = std::max(directed_grid(a, grid_b), directed_grid(b, grid_a));
  return squared ? d : std::sqrt(d);
}

const std::array<const char*, 6>& TapeMeasurements::names() {
  static const std::array<const char*, 6> n = {"neck", "arm",   "leg",
                                               "chest", "waist", "hip"};
  return n;
}

namespace {

double chain_length(const Points3& joints, int a, int b, int c) {
  return (joints.row(a) - joints.row(b)).norm() +
         (joints.row(b) - joints.row(c)).norm();
}

// Perimeter of the convex hull of the mesh cross section at axis·p = level.
double section_perimeter(const Mesh& mesh, const Vec3& axis, double level,
                         const char* name) {
  const Vec3 u = any_perpendicular(axis);
  const Vec3 w = axis.cross(u);
  std::vector<Vec2> pts;
  const auto& V = mesh.vertices;
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    Vec3 p[3];
    double d[3];
    for (int e = 0; e < 3; ++e) {
      p[e] = V.row(mesh.faces(f, e)).transpose();
      d[e] = axis.dot(p[e]) - level;
    }
    for (int e = 0; e < 3; ++e) {
      const int g = (e + 1) % 3;
      if (d[e] == 0.0) {
        pts.emplace_back(u.dot(p[e]), w.dot(p[e]));
      } else if ((d[e] < 0) != (d[g] < 0) && d[g] != 0.0) {
        const double s = d[e] / (d[e] - d[g]);
        const Vec3 x = p[e] + s * (p[g] - p[e]);
        pts.emplace_back(u.dot(x), w.dot(x));
      }
    }
  }
  require(pts.size() >= 3, std::string("tape_measurements: cross-section plane "
                                       "misses the mesh for measurement '") +
                               name + "'");

  // Monotone-chain convex hull.
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross2 = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t h = 0;
  for (const Vec2& p : pts) {
    while (h >= 2 && cross2(hull[h - 2], hull[h - 1], p) <= 0) --h;
    hull[h++] = p;
  }
  const std::size_t lower = h + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (h >= lower && cross2(hull[h - 2], hull[h - 1], *it) <= 0) --h;
    hull[h++] = *it;
  }
  hull.resize(h > 1 ? h - 1 : h);
  double perimeter = 0;
  for (std::size_t i = 0; i < hull.size(); ++i)
    perimeter += (hull[(i + 1) % hull.size()] - hull[i]).norm();
  return perimeter;
}

}  // namespace

TapeMeasurements tape_measurements(const Mesh& mesh, const BodyTemplate& t) {
  require(mesh.vertices.rows() == t.vertex_count,
          "tape_measurements: mesh vertex count mismatch");
  Mesh rest{mesh.vertices, t.faces};
  const Points3 joints = regress_joints(t, rest);
  const auto& kp = t.keypoint_map;

  TapeMeasurements m;
  // Keypoint order: r_ankle, r_knee, r_hip, l_hip, l_knee, l_ankle,
  // r_wrist, r_elbow, r_shoulder, l_shoulder, l_elbow, l_wrist, neck, head.
  m.arm = 0.5 * (chain_length(joints, kp[9], kp[10], kp[11]) +
                 chain_length(joints, kp[8], kp[7], kp[6]));
  m.leg = 0.5 * (chain_length(joints, kp[3], kp[4], kp[5]) +
                 chain_length(joints, kp[2], kp[1], kp[0]));

  const Vec3 axis = t.torso_axis.normalized();
  const double s_lo =
      0.5 * (axis.dot(joints.row(kp[0]).transpose()) +
             axis.dot(joints.row(kp[5]).transpose()));  // ankles
  const double s_hi = axis.dot(joints.row(kp[13]).transpose());  // head
  require(s_hi > s_lo, "tape_measurements: degenerate torso span");

  const auto level = [&](double frac) { return s_lo + frac * (s_hi - s_lo); };
  m.neck = section_perimeter(mesh, axis, level(t.section_fractions[0]), "neck");
  m.chest = section_perimeter(mesh, axis, level(t.section_fractions[1]), "chest");
  m.waist = section_perimeter(mesh, axis, level(t.section_fractions[2]), "waist");
  m.hip = section_perimeter(mesh, axis, level(t.section_fractions[3]), "hip");
  return m;
}

RelativeErrors relative_errors(const TapeMeasurements& pred,
                               const TapeMeasurements& gt) {
  const auto p = pred.as_array();
  const auto g = gt.as_array();
  RelativeErrors out;
  double sum = 0;
  for (int i = 0; i < 6; ++i) {
    require(g[i] > 0, std::string("relative_errors: nonpositive ground truth "
                                  "measurement '") +
                          TapeMeasurements::names()[i] + "'");
    out.percent[i] = 100.0 * std::abs(p[i] - g[i]) / g[i];
    sum += out.percent[i];
  }
  out.mean_percent = sum / 6.0;
  return out;
}

}  // namespace mvb
