// Microbenchmarks for the hot paths: forward kinematics, Jacobians, the IK
// and PnP solvers, keyframe distillation, and lifter inference.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "kinerec/camera_geometry.hpp"
#include "kinerec/dataset_synth.hpp"
#include "kinerec/ik_solver.hpp"
#include "kinerec/kinematic_model.hpp"
#include "kinerec/lifting.hpp"
#include "kinerec/pnp_align.hpp"
#include "kinerec/rng.hpp"

namespace {

using namespace kinerec;

std::string fixture(const std::string& name) {
  return std::string(KINEREC_FIXTURE_DIR) + "/" + name;
}

const KinematicModel& humanoid() {
  static const KinematicModel model = load_model(fixture("humanoid29.urdf"));
  return model;
}

Eigen::VectorXd bent_pose(const KinematicModel& model) {
  DeterministicRng rng(7);
  const Eigen::VectorXd lo = model.lower_limits();
  const Eigen::VectorXd hi = model.upper_limits();
  Eigen::VectorXd q(model.dof());
  for (int j = 0; j < model.dof(); ++j) {
    const double a = std::max(lo[j], -0.3);
    const double b = std::min(hi[j], 0.3);
    q[j] = a <= b ? rng.uniform(a, b) : 0.5 * (lo[j] + hi[j]);
  }
  return q;
}

Eigen::VectorXd mid_pose(const KinematicModel& model) {
  return 0.5 * (model.lower_limits() + model.upper_limits());
}

void BM_ForwardKinematics(benchmark::State& state) {
  const KinematicModel& model = humanoid();
  const Eigen::VectorXd q = bent_pose(model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_kinematics(model, q));
  }
}
BENCHMARK(BM_ForwardKinematics);

void BM_KeypointJacobian(benchmark::State& state) {
  const KinematicModel& model = humanoid();
  const Eigen::VectorXd q = bent_pose(model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(keypoint_jacobian(model, q));
  }
}
BENCHMARK(BM_KeypointJacobian);

void BM_SolveIk(benchmark::State& state) {
  const KinematicModel& model = humanoid();
  const Eigen::VectorXd q_true = bent_pose(model);
  IkProblem problem;
  problem.targets = forward_kinematics(model, q_true);
  problem.weights = Eigen::VectorXd::Ones(problem.targets.rows());
  problem.q_init = mid_pose(model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_ik(model, problem));
  }
}
BENCHMARK(BM_SolveIk);

void BM_SolvePnp(benchmark::State& state) {
  const KinematicModel& model = humanoid();
  PnpProblem problem;
  problem.local_points = forward_kinematics(model, bent_pose(model));
  const int n = static_cast<int>(problem.local_points.rows());
  problem.weights = Eigen::VectorXd::Ones(n);
  RigidTransform pose;
  pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY()));
  pose.translation = Eigen::Vector3d(0.1, -0.2, 3.0);
  problem.pixels.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    problem.pixels.row(i) =
        project_camera_point(problem.intrinsics, pose.apply(problem.local_points.row(i).transpose()))
            .transpose();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_pnp(problem));
  }
}
BENCHMARK(BM_SolvePnp);

void BM_DistillKeyframes(benchmark::State& state) {
  const KinematicModel& model = humanoid();
  TrajectoryConfig config;
  config.frames = static_cast<int>(state.range(0));
  config.seed = 11;
  const auto qs = sample_joint_trajectory(model, config);
  for (auto _ : state) {
    benchmark::DoNotOptimize(distill_keyframes(qs, static_cast<int>(state.range(0)) / 10));
  }
}
BENCHMARK(BM_DistillKeyframes)->Arg(200)->Arg(1000);

void BM_LifterForward(benchmark::State& state) {
  const LifterNetwork net = make_lifter(34, 0, 256, 5);
  DeterministicRng rng(6);
  Eigen::VectorXd input(68);
  for (int i = 0; i < 68; ++i) input[i] = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lifter_forward(net, input));
  }
}
BENCHMARK(BM_LifterForward);

}  // namespace

BENCHMARK_MAIN();
