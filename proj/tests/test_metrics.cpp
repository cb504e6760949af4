#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvbody/body_model.hpp"
#include "mvbody/metrics.hpp"
#include "oracles.hpp"

#include <algorithm>

using namespace mvb;

namespace {

Points3 random_points(Rng& rng, int n, double span = 1.0) {
  Points3 pts(n, 3);
  for (int i = 0; i < n; ++i)
    pts.row(i) = Vec3(rng.uniform(-span, span), rng.uniform(-span, span),
                      rng.uniform(-span, span))
                     .transpose();
  return pts;
}

}  // namespace

TEST_CASE("procrustes of identical sets is the identity with zero residual") {
  Rng rng(41);
  const Points3 gt = random_points(rng, 12);
  const auto result = procrustes_align(gt, gt);
  CHECK(result.transform.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((result.transform.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((result.aligned - gt).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("procrustes recovers an exact similarity transform") {
  Rng rng(42);
  const Points3 gt = random_points(rng, 10);
  // pred = 2 * R90z * gt  =>  alignment must find scale 0.5 and R90z^-1.
  const Mat3 R = rodrigues(Vec3(0, 0, M_PI / 2));
  Points3 pred(gt.rows(), 3);
  for (int i = 0; i < gt.rows(); ++i)
    pred.row(i) = (2.0 * (R * gt.row(i).transpose())).transpose();
  const auto result = procrustes_align(pred, gt);
  CHECK(result.transform.scale == doctest::Approx(0.5).epsilon(1e-12));
  CHECK((result.transform.rotation - R.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((result.aligned - gt).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("procrustes residual tracks the noise level") {
  Rng rng(43);
  const double sigma = 1e-3;  // 1mm noise on the target side
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Points3 gt = random_points(rng, 14);
    const double s = std::exp(rng.uniform(-0.5, 0.5));
    const Mat3 R = rodrigues(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2),
                                  rng.uniform(-2, 2)));
    const Vec3 trans(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Points3 pred(gt.rows(), 3);
    for (int i = 0; i < gt.rows(); ++i)
      pred.row(i) = (s * (R * gt.row(i).transpose()) + trans).transpose();
    for (int i = 0; i < gt.rows(); ++i)
      for (int c = 0; c < 3; ++c) gt(i, c) += sigma * rng.normal();
    const auto result = procrustes_align(pred, gt);
    const double rms =  // per coordinate
        std::sqrt((result.aligned - gt).squaredNorm() / (3.0 * gt.rows()));
    if (rms >= 0.5 * sigma && rms <= 1.5 * sigma) ++ok;
  }
  CHECK(ok >= 95);
}

TEST_CASE("procrustes names collinear degeneracies") {
  Points3 pred(4, 3), gt(4, 3);
  for (int i = 0; i < 4; ++i) {
    pred.row(i) = Vec3(i, 0, 0).transpose();
    gt.row(i) = Vec3(0, i, 0).transpose();
  }
  bool named = false;
  try {
    procrustes_align(pred, gt);
  } catch (const std::exception& e) {
    named = std::string(e.what()).find("collinear") != std::string::npos;
  }
  CHECK(named);
  CHECK_THROWS(procrustes_align(pred.topRows(2), gt.topRows(2)));
}

TEST_CASE("mpjpe basics and loop oracle") {
  Rng rng(44);
  const Points3 gt = random_points(rng, 14);
  CHECK(mpjpe_mm(gt, gt) == 0.0);

  Points3 shifted = gt;
  for (int i = 0; i < shifted.rows(); ++i) shifted(i, 0) += 0.03;
  CHECK(mpjpe_mm(shifted, gt) == doctest::Approx(30.0).epsilon(1e-12));

  const Points3 pred = random_points(rng, 14);
  double sum = 0;
  for (int i = 0; i < 14; ++i) sum += (pred.row(i) - gt.row(i)).norm() * 1000.0;
  CHECK(mpjpe_mm(pred, gt) == doctest::Approx(sum / 14).epsilon(1e-12));
}

TEST_CASE("pck hand checks and count oracle") {
  CHECK(pck({10, 100, 200}, 150) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(pck({0, 0, 0, 0}, 150) == 1.0);
  Rng rng(45);
  std::vector<double> errors;
  for (int i = 0; i < 57; ++i) errors.push_back(rng.uniform(0, 300));
  const double thr = 140;
  int count = 0;
  for (double e : errors) count += e <= thr;
  CHECK(pck(errors, thr) == doctest::Approx(double(count) / 57).epsilon(1e-15));
}

TEST_CASE("auc endpoints and single-error step") {
  CHECK(auc({0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(auc({151, 200, 500}) == doctest::Approx(0.0).epsilon(1e-15));
  // A single error at 75mm: the PCK step sits exactly mid-range, so the
  // trapezoid integral is 0.5 within one trapezoid width (5mm / 150mm).
  const double value = auc({75.0});
  CHECK(std::abs(value - 0.5) <= 5.0 / 150.0 + 1e-12);
}

TEST_CASE("pck is monotone in the threshold; auc matches sampled mean") {
  Rng rng(46);
  std::vector<double> errors;
  for (int i = 0; i < 40; ++i) errors.push_back(rng.uniform(0, 250));
  double prev = 0;
  for (int t = 0; t <= 150; t += 5) {
    const double p = pck(errors, t);
    CHECK(p >= prev);
    prev = p;
  }
  const double a = auc(errors);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
  // Trapezoid integral vs plain mean over the same samples: they differ by
  // at most half a trapezoid at each end.
  double mean = 0;
  for (int i = 0; i < 31; ++i) mean += pck(errors, 5.0 * i);
  mean /= 31;
  CHECK(std::abs(a - mean) <= 0.5 / 30.0 + 1e-12);
}

TEST_CASE("hausdorff basics: identical sets and the 3-4-5 pair") {
  Rng rng(47);
  const Points3 v = random_points(rng, 50);
  CHECK(hausdorff(v, v) == 0.0);

  Points3 a(1, 3), b(1, 3);
  a << 0, 0, 0;
  b << 3, 4, 0;
  CHECK(hausdorff(a, b) == 5.0);
  CHECK(hausdorff(a, b, /*squared=*/true) == 25.0);
}

TEST_CASE("grid-accelerated hausdorff equals brute force bitwise") {
  Rng rng(48);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = rng.uniform_int(1, 500);
    const int m = rng.uniform_int(1, 500);
    const Points3 a = random_points(rng, n, rng.uniform(0.1, 10.0));
    const Points3 b = random_points(rng, m, rng.uniform(0.1, 10.0));
    CHECK(hausdorff(a, b) == hausdorff_bruteforce(a, b));
    CHECK(hausdorff(a, b, true) == hausdorff_bruteforce(a, b, true));
  }
}

TEST_CASE("hausdorff is symmetric and satisfies the triangle inequality") {
  Rng rng(49);
  const Points3 a = random_points(rng, 60), b = random_points(rng, 70),
                c = random_points(rng, 50);
  CHECK(hausdorff(a, b) == hausdorff(b, a));
  CHECK(hausdorff(a, c) <= hausdorff(a, b) + hausdorff(b, c) + 1e-12);
}

TEST_CASE("hausdorff rejects empty sets") {
  Points3 empty(0, 3), one(1, 3);
  one << 0, 0, 0;
  CHECK_THROWS(hausdorff(empty, one));
  CHECK_THROWS(hausdorff_bruteforce(one, empty));
}

TEST_CASE("pa-mpjpe is invariant to similarity transforms of the prediction") {
  Rng rng(50);
  const Points3 gt = random_points(rng, 14);
  const Points3 pred = gt + 0.01 * random_points(rng, 14);
  const double base = pa_mpjpe_mm(pred, gt);
  for (int trial = 0; trial < 30; ++trial) {
    const double s = std::exp(rng.uniform(-1, 1));
    const Mat3 R = rodrigues(
        Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)));
    const Vec3 trans(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    Points3 moved(pred.rows(), 3);
    for (int i = 0; i < pred.rows(); ++i)
      moved.row(i) = (s * (R * pred.row(i).transpose()) + trans).transpose();
    CHECK(std::abs(pa_mpjpe_mm(moved, gt) - base) < 1e-9);
  }
}

TEST_CASE("alignment never increases the mean squared error") {
  Rng rng(51);
  for (int trial = 0; trial < 1000; ++trial) {
    const Points3 gt = random_points(rng, 8);
    const Points3 pred = random_points(rng, 8);
    ProcrustesResult result;
    try {
      result = procrustes_align(pred, gt);
    } catch (const std::exception&) {
      continue;  // skip degenerate draws
    }
    const double before = (pred - gt).squaredNorm();
    const double after = (result.aligned - gt).squaredNorm();
    CHECK(after <= before + 1e-9);
  }
}

TEST_CASE("tape measurements are deterministic and scale homogeneously") {
  const BodyTemplate t = make_mini_template({600, 3});
  const Mesh mesh = skin(t, BodyParams::zero(t));
  const TapeMeasurements a = tape_measurements(mesh, t);
  const TapeMeasurements b = tape_measurements(mesh, t);
  CHECK(a.as_array() == b.as_array());

  Mesh doubled = mesh;
  doubled.vertices *= 2.0;
  const TapeMeasurements d = tape_measurements(doubled, t);
  const auto base = a.as_array(), scaled = d.as_array();
  for (int i = 0; i < 6; ++i)
    CHECK(scaled[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-9));
}

TEST_CASE("tape measurement plane missing the mesh names the measurement") {
  // The chain template's tetrahedra leave gaps along the axis, so a plane
  // between two of them intersects no triangles.
  BodyTemplate t = oracle::make_chain_template(4, 0);
  t.section_fractions[0] = 0.5;
  const Mesh mesh = skin(t, BodyParams::zero(t));
  bool named = false;
  try {
    tape_measurements(mesh, t);
  } catch (const std::exception& e) {
    named = std::string(e.what()).find("neck") != std::string::npos;
  }
  CHECK(named);
}

TEST_CASE("relative errors: zeros, uniform 10 percent, and loop oracle") {
  TapeMeasurements gt;
  gt.neck = 0.4;
  gt.arm = 0.6;
  gt.leg = 0.9;
  gt.chest = 1.0;
  gt.waist = 0.8;
  gt.hip = 0.95;
  const auto zero = relative_errors(gt, gt);
  for (double p : zero.percent) CHECK(p == 0.0);
  CHECK(zero.mean_percent == 0.0);

  TapeMeasurements pred = gt;
  pred.neck *= 1.1;
  pred.arm *= 1.1;
  pred.leg *= 1.1;
  pred.chest *= 1.1;
  pred.waist *= 1.1;
  pred.hip *= 1.1;
  const auto ten = relative_errors(pred, gt);
  for (double p : ten.percent) CHECK(p == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(ten.mean_percent == doctest::Approx(10.0).epsilon(1e-9));

  Rng rng(52);
  TapeMeasurements noisy = gt;
  noisy.neck += rng.uniform(-0.05, 0.05);
  noisy.waist += rng.uniform(-0.05, 0.05);
  const auto r = relative_errors(noisy, gt);
  const auto p = noisy.as_array(), g = gt.as_array();
  double mean = 0;
  for (int i = 0; i < 6; ++i) {
    const double expect = 100.0 * std::abs(p[i] - g[i]) / g[i];
    CHECK(r.percent[i] == doctest::Approx(expect).epsilon(1e-12));
    mean += expect;
  }
  CHECK(r.mean_percent == doctest::Approx(mean / 6).epsilon(1e-12));
}
