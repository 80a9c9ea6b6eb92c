#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "kinerec/errors.hpp"
#include "kinerec/metrics_eval.hpp"
#include "test_support.hpp"

using namespace kinerec;

namespace {

std::vector<Eigen::MatrixX3d> single_cloud(const Eigen::MatrixX3d& m) { return {m}; }

Eigen::MatrixX3d cloud4() {
  Eigen::MatrixX3d m(4, 3);
  m << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0.5, 0.5, 0.7;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("mpjpe measures the 3-4-5 triangle") {
  const Eigen::MatrixX3d gt = cloud4();
  Eigen::MatrixX3d pred = gt;
  // Shift one joint by (3mm, 4mm): distance 5mm; mean over 4 joints = 1.25mm.
  pred(2, 0) += 0.003;
  pred(2, 1) += 0.004;
  CHECK(mpjpe_mm(single_cloud(pred), single_cloud(gt), Alignment::kNone) ==
        doctest::Approx(1.25).epsilon(1e-12));
  const std::vector<double> per_joint =
      per_joint_error_mm(single_cloud(pred), single_cloud(gt), Alignment::kNone);
  REQUIRE(per_joint.size() == 4);
  CHECK(per_joint[2] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(per_joint[0] == doctest::Approx(0.0));
}

TEST_CASE("constant offsets vanish under root alignment") {
  const Eigen::MatrixX3d gt = cloud4();
  Eigen::MatrixX3d pred = gt;
  for (int r = 0; r < 4; ++r) pred.row(r) += Eigen::RowVector3d(0.14, 0.0, 0.0);
  // Unaligned: exactly the 0.14 m offset, reported in millimeters.
  CHECK(mpjpe_mm(single_cloud(pred), single_cloud(gt), Alignment::kNone) ==
        doctest::Approx(140.0).epsilon(1e-12));
  // Root alignment removes it completely.
  CHECK(mpjpe_mm(single_cloud(pred), single_cloud(gt), Alignment::kRoot, 0) ==
        doctest::Approx(0.0).epsilon(1e-12));

  // Root alignment with a nonzero-root prediction subtracts per-cloud roots.
  Eigen::MatrixX3d skew = gt;
  skew.row(1) += Eigen::RowVector3d(0.0, 0.02, 0.0);
  const double expect = 1000.0 * 0.02 / 4.0;
  CHECK(mpjpe_mm(single_cloud(skew), single_cloud(gt), Alignment::kRoot, 0) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mpjpe joint masks and input validation") {
  const Eigen::MatrixX3d gt = cloud4();
  Eigen::MatrixX3d pred = gt;
  pred(1, 0) += 0.01;
  pred(3, 2) += 0.02;
  const std::vector<bool> only_joint_1 = {false, true, false, false};
  CHECK(mpjpe_mm(single_cloud(pred), single_cloud(gt), Alignment::kNone, 0, only_joint_1) ==
        doctest::Approx(10.0).epsilon(1e-12));
  const std::vector<bool> none = {false, false, false, false};
  CHECK_THROWS_AS(
      mpjpe_mm(single_cloud(pred), single_cloud(gt), Alignment::kNone, 0, none),
      ValidationError);
  CHECK_THROWS_AS(mpjpe_mm({}, {}, Alignment::kNone), ValidationError);
  CHECK_THROWS_AS(mpjpe_mm(single_cloud(pred), {}, Alignment::kNone), ValidationError);
}

TEST_CASE("pck boundary is inclusive and pooled over joints") {
  Eigen::MatrixX2d gt(4, 2);
  gt << 100, 100, 200, 100, 100, 200, 200, 200;  // bbox 100x100
  Eigen::MatrixX2d pred = gt;
  pred(0, 0) += 5.0;        // exactly at the 0.05 * 100 radius: counts
  pred(1, 0) += 5.0000001;  // just outside: misses
  pred(2, 1) += 4.9;        // inside
  const Eigen::Vector4d bbox(100.0, 100.0, 200.0, 200.0);
  const std::vector<bool> vis(4, true);
  const double got = pck({pred}, {gt}, {bbox}, {vis}, 0.05);
  CHECK(got == doctest::Approx(0.75).epsilon(1e-12));

  // Invisible joints leave the pool.
  std::vector<bool> partial = {true, false, true, true};
  CHECK(pck({pred}, {gt}, {bbox}, {partial}, 0.05) == doctest::Approx(1.0).epsilon(1e-12));

  // Empty boxes are named.
  const Eigen::Vector4d empty(0.0, 0.0, 0.0, 0.0);
  CHECK_THROWS_WITH_AS(pck({pred}, {gt}, {empty}, {vis}, 0.05),
                       doctest::Contains("frame 0"), ValidationError);
  // No visible joints at all: nothing to pool.
  const std::vector<bool> blind(4, false);
  CHECK_THROWS_AS(pck({pred}, {gt}, {bbox}, {blind}, 0.05), ValidationError);
}

TEST_CASE("pck agrees with a brute-force recount") {
  // Deterministic pseudo-random clouds, recounted with an independent loop.
  std::vector<Eigen::MatrixX2d> preds, gts;
  std::vector<Eigen::Vector4d> boxes;
  std::vector<std::vector<bool>> vis;
  unsigned state = 12345;
  auto next = [&]() {
    state = state * 1664525u + 1013904223u;
    return static_cast<double>(state >> 8) / 16777216.0;
  };
  for (int f = 0; f < 5; ++f) {
    Eigen::MatrixX2d gt(6, 2), pred(6, 2);
    std::vector<bool> v;
    for (int k = 0; k < 6; ++k) {
      gt(k, 0) = 300.0 * next();
      gt(k, 1) = 200.0 * next();
      pred(k, 0) = gt(k, 0) + 30.0 * (next() - 0.5);
      pred(k, 1) = gt(k, 1) + 30.0 * (next() - 0.5);
      v.push_back(next() > 0.2);
    }
    if (std::none_of(v.begin(), v.end(), [](bool b) { return b; })) v[0] = true;
    preds.push_back(pred);
    gts.push_back(gt);
    boxes.push_back(Eigen::Vector4d(0.0, 0.0, 280.0, 190.0));
    vis.push_back(v);
  }
  const double threshold = 0.10;
  int hit = 0, total = 0;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    const double radius = threshold * std::max(boxes[f][2] - boxes[f][0],
                                               boxes[f][3] - boxes[f][1]);
    for (int k = 0; k < 6; ++k) {
      if (!vis[f][static_cast<std::size_t>(k)]) continue;
      ++total;
      if ((preds[f].row(k) - gts[f].row(k)).norm() <= radius) ++hit;
    }
  }
  CHECK(pck(preds, gts, boxes, vis, threshold) ==
        doctest::Approx(static_cast<double>(hit) / total).epsilon(1e-12));
  CHECK(total > 10);
}

TEST_CASE("object keypoint similarity matches the closed form") {
  Eigen::MatrixX2d gt(4, 2);
  gt << 100, 100, 200, 100, 100, 200, 200, 200;
  const Eigen::Vector4d bbox(100.0, 100.0, 200.0, 200.0);  // area 10000
  const std::vector<bool> vis(4, true);

  // Perfect prediction scores 1.
  CHECK(oks(gt, gt, bbox, vis) == doctest::Approx(1.0));

  // One joint off by d: mean of exp(-d^2 / (2 * area * kappa^2)) and three 1s.
  Eigen::MatrixX2d pred = gt;
  pred(0, 0) += 10.0;
  const double term = std::exp(-100.0 / (2.0 * 10000.0 * 0.01));
  CHECK(oks(pred, gt, bbox, vis) == doctest::Approx((3.0 + term) / 4.0).epsilon(1e-12));

  // Only visible joints participate.
  std::vector<bool> partial = {false, true, true, true};
  CHECK(oks(pred, gt, bbox, partial) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(oks(pred, gt, Eigen::Vector4d(0, 0, 0, 0), vis), ValidationError);
}

TEST_CASE("average precision over the oks ladder") {
  Eigen::MatrixX2d gt(4, 2);
  gt << 100, 100, 200, 100, 100, 200, 200, 200;
  const Eigen::Vector4d bbox(100.0, 100.0, 200.0, 200.0);
  const std::vector<bool> vis(4, true);

  // Degrade every joint equally so OKS is exactly exp(-d^2/200) per joint.
  // Choose d so OKS = 0.72: it clears thresholds 0.50..0.70 and fails
  // 0.75..0.95, giving AP exactly 0.5.
  const double d = std::sqrt(-2.0 * 10000.0 * 0.01 * std::log(0.72));
  Eigen::MatrixX2d pred = gt;
  for (int k = 0; k < 4; ++k) pred(k, 0) += d;
  CHECK(oks(pred, gt, bbox, vis) == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(oks_ap({pred}, {gt}, {bbox}, {vis}) == doctest::Approx(0.5).epsilon(1e-12));

  // Perfect predictions: AP 1. Hopeless predictions: AP 0.
  CHECK(oks_ap({gt}, {gt}, {bbox}, {vis}) == doctest::Approx(1.0));
  Eigen::MatrixX2d far = gt;
  far.col(0).array() += 500.0;
  CHECK(oks_ap({far}, {gt}, {bbox}, {vis}) == doctest::Approx(0.0));

  // Frames with no visible joints are skipped, not scored.
  const std::vector<bool> blind(4, false);
  CHECK(oks_ap({pred, gt}, {gt, gt}, {bbox, bbox}, {blind, vis}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(oks_ap({pred}, {gt}, {bbox}, {blind}), ValidationError);
}

TEST_CASE("spatial alignment error over a window") {
  std::vector<Eigen::Vector3d> effector;
  for (int i = 0; i < 6; ++i) {
    effector.push_back(Eigen::Vector3d(0.1 * i, 0.0, 0.0));
  }
  const Eigen::Vector3d contact(0.0, 0.0, 0.0);
  // Window [2, 5): distances 0.2, 0.3, 0.4 -> mean 0.3.
  CHECK(spatial_alignment_error(effector, contact, 2, 5) ==
        doctest::Approx(0.3).epsilon(1e-12));
  // Constant 0.14 m offset anywhere in the window reports exactly 0.14.
  std::vector<Eigen::Vector3d> constant(4, Eigen::Vector3d(0.14, 0.0, 0.0));
  CHECK(spatial_alignment_error(constant, contact, 0, 4) ==
        doctest::Approx(0.14).epsilon(1e-12));
  CHECK_THROWS_AS(spatial_alignment_error(effector, contact, 4, 2), ValidationError);
  CHECK_THROWS_AS(spatial_alignment_error(effector, contact, 0, 9), ValidationError);
}

TEST_CASE("eval reports serialize with provenance") {
  EvalReport report;
  report.mpjpe_mm = 12.5;
  report.pck = {{0.05, 0.8}, {0.10, 0.9}};
  report.ap = 0.75;
  report.per_joint_errors_mm = {1.0, 2.0};
  report.frame_count = 3;
  const std::string text = serialize_eval_report(report, "tool 1.0.0 config=ff");
  CHECK(text.find("\"mpjpe_mm\":12.5") != std::string::npos);
  CHECK(text.find("\"provenance\":\"tool 1.0.0 config=ff\"") != std::string::npos);
  CHECK(text.back() == '\n');
  // Provenance-free serialization omits the key entirely.
  const std::string bare = serialize_eval_report(report);
  CHECK(bare.find("provenance") == std::string::npos);
}

TEST_SUITE_END();
