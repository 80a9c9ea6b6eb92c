#include <cmath>

#include <doctest.h>

#include "kinerec/camera_geometry.hpp"
#include "kinerec/errors.hpp"
#include "kinerec/kinematic_model.hpp"
#include "kinerec/pnp_align.hpp"
#include "test_support.hpp"

using namespace kinerec;

namespace {

KinematicModel humanoid() { return load_model(kinerec_test::fixture("humanoid29.urdf")); }

/// Non-degenerate cloud of local points: the humanoid keypoints at a bent pose.
Eigen::MatrixX3d body_points() {
  const KinematicModel model = humanoid();
  Eigen::VectorXd q(model.dof());
  for (int j = 0; j < model.dof(); ++j) q[j] = 0.25 * std::sin(2.1 * (j + 1));
  return forward_kinematics(model, q);
}

PnpProblem exact_problem(const RigidTransform& pose) {
  PnpProblem problem;
  problem.local_points = body_points();
  const int n = static_cast<int>(problem.local_points.rows());
  problem.pixels.resize(n, 2);
  problem.weights = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d cam_pt = pose.apply(problem.local_points.row(i).transpose());
    problem.pixels.row(i) = project_camera_point(problem.intrinsics, cam_pt).transpose();
  }
  return problem;
}

RigidTransform test_pose(double angle, const Eigen::Vector3d& axis, const Eigen::Vector3d& t) {
  RigidTransform pose;
  pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized()));
  pose.translation = t;
  return pose;
}

}  // namespace

TEST_SUITE_BEGIN("pnp");

TEST_CASE("noiseless poses are recovered to machine precision") {
  for (const RigidTransform& truth :
       {test_pose(0.7, {1, 2, 3}, {0.2, -0.1, 3.5}),
        test_pose(-1.3, {0, 1, 0}, {-0.4, 0.3, 2.8}),
        test_pose(2.9, {1, 0, -1}, {0.05, 0.6, 4.0}),
        test_pose(0.0, {0, 0, 1}, {0.0, 0.0, 3.0})}) {
    const PnpProblem problem = exact_problem(truth);
    const PnpSolution sol = solve_pnp(problem);
    CHECK(sol.converged);
    CHECK(sol.reproj_rms < 1e-6);
    CHECK(quat_geodesic_angle(sol.cam_from_local.rotation, truth.rotation) < 1e-6);
    CHECK((sol.cam_from_local.translation - truth.translation).norm() < 1e-6);
    // Cheirality: every weighted point in front of the camera.
    for (int i = 0; i < problem.local_points.rows(); ++i) {
      CHECK(sol.cam_from_local.apply(problem.local_points.row(i).transpose()).z() > 0.0);
    }
  }
}

TEST_CASE("a provided initial pose is honored and speeds convergence") {
  const RigidTransform truth = test_pose(0.9, {2, -1, 1}, {0.1, 0.2, 3.0});
  PnpProblem cold = exact_problem(truth);
  const PnpSolution cold_sol = solve_pnp(cold);

  PnpProblem warm = cold;
  RigidTransform near = truth;
  near.translation.z() += 0.05;
  warm.pose_init = near;
  const PnpSolution warm_sol = solve_pnp(warm);
  CHECK(warm_sol.converged);
  CHECK(warm_sol.iterations <= cold_sol.iterations);
  CHECK((warm_sol.cam_from_local.translation - truth.translation).norm() < 1e-6);
}

TEST_CASE("zero-weight outliers are ignored exactly") {
  const RigidTransform truth = test_pose(0.4, {1, 1, 0}, {0.0, -0.2, 3.2});
  PnpProblem problem = exact_problem(truth);
  problem.pixels(2, 0) += 400.0;  // corrupt one measurement
  problem.pixels(7, 1) -= 250.0;
  problem.weights[2] = 0.0;
  problem.weights[7] = 0.0;
  const PnpSolution sol = solve_pnp(problem);
  CHECK(sol.converged);
  CHECK((sol.cam_from_local.translation - truth.translation).norm() < 1e-6);
  CHECK(quat_geodesic_angle(sol.cam_from_local.rotation, truth.rotation) < 1e-6);
}

TEST_CASE("metric scale recovery flags both half and double scale") {
  const RigidTransform truth = test_pose(0.6, {0, 1, 2}, {0.15, 0.05, 3.1});
  const PnpProblem problem = exact_problem(truth);
  for (double s : {0.5, 2.0}) {
    const MetricScaleReport report = metric_scale_check(problem, s);
    CHECK(report.passed);
    CHECK(report.translation_error_m < 1e-6);
    CHECK(report.rotation_error_rad < 1e-6);
  }
  CHECK_THROWS_AS(metric_scale_check(problem, -1.0), ValidationError);
}

TEST_CASE("degenerate geometry is rejected by name") {
  PnpProblem collinear;
  collinear.local_points.resize(5, 3);
  for (int i = 0; i < 5; ++i) {
    collinear.local_points.row(i) = Eigen::RowVector3d(0.1 * i, 0.2 * i, 0.05 * i);
  }
  collinear.pixels = Eigen::MatrixX2d::Zero(5, 2);
  for (int i = 0; i < 5; ++i) collinear.pixels.row(i) << 320.0 + 5.0 * i, 240.0 - 3.0 * i;
  collinear.weights = Eigen::VectorXd::Ones(5);
  CHECK_THROWS_WITH_AS(solve_pnp(collinear), doctest::Contains("collinear"), ValidationError);

  PnpProblem few = exact_problem(test_pose(0.3, {1, 0, 0}, {0, 0, 3}));
  few.weights.setZero();
  few.weights[0] = 1.0;
  few.weights[1] = 1.0;
  few.weights[2] = 1.0;
  CHECK_THROWS_WITH_AS(solve_pnp(few), doctest::Contains("under-constrained"), ValidationError);

  PnpProblem negative = exact_problem(test_pose(0.3, {1, 0, 0}, {0, 0, 3}));
  negative.weights[4] = -0.1;
  CHECK_THROWS_AS(solve_pnp(negative), ValidationError);

  PnpProblem mismatched = exact_problem(test_pose(0.3, {1, 0, 0}, {0, 0, 3}));
  mismatched.pixels.conservativeResize(4, 2);
  CHECK_THROWS_AS(solve_pnp(mismatched), ValidationError);
}

TEST_CASE("solutions are deterministic across reruns") {
  const RigidTransform truth = test_pose(1.8, {3, 1, -2}, {-0.3, 0.25, 3.4});
  const PnpProblem problem = exact_problem(truth);
  const PnpSolution a = solve_pnp(problem);
  const PnpSolution b = solve_pnp(problem);
  CHECK(a.reproj_rms == b.reproj_rms);
  CHECK((a.cam_from_local.translation - b.cam_from_local.translation).norm() == 0.0);
  CHECK(a.iterations == b.iterations);
}

TEST_SUITE_END();
