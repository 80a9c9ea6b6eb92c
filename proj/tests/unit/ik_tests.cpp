#include <cmath>
#include <vector>

#include <doctest.h>

#include "kinerec/errors.hpp"
#include "kinerec/ik_solver.hpp"
#include "kinerec/rng.hpp"
#include "test_support.hpp"

using namespace kinerec;

namespace {
constexpr double kPi = 3.14159265358979323846;

KinematicModel planar() { return load_model(kinerec_test::fixture("planar_two_link.urdf")); }
KinematicModel humanoid() { return load_model(kinerec_test::fixture("humanoid29.urdf")); }

IkProblem targets_from_q(const KinematicModel& model, const Eigen::VectorXd& q) {
  IkProblem problem;
  problem.targets = forward_kinematics(model, q);
  problem.weights = Eigen::VectorXd::Ones(model.num_keypoints());
  problem.q_init = Eigen::VectorXd::Zero(model.dof());
  return problem;
}
}  // namespace

TEST_SUITE_BEGIN("ik");

TEST_CASE("center_targets zeroes the root row and is idempotent") {
  Eigen::MatrixX3d pts(3, 3);
  pts << 1, 2, 3, 4, 5, 6, -1, 0, 2;
  const Eigen::MatrixX3d centered = center_targets(pts, 0);
  CHECK(centered.row(0).norm() == 0.0);
  CHECK(centered(1, 0) == doctest::Approx(3.0));
  CHECK(centered(2, 2) == doctest::Approx(-1.0));
  CHECK((center_targets(centered, 0) - centered).norm() == 0.0);
  CHECK_THROWS_AS(center_targets(pts, 7), ValidationError);
}

TEST_CASE("two-link arm recovers exact reachable poses") {
  const KinematicModel model = planar();
  for (const auto& truth : std::vector<Eigen::Vector2d>{
           {kPi / 2.0, 0.0}, {0.0, kPi / 2.0}, {0.7, -1.2}, {-1.5, 1.9}, {0.3, 0.4}}) {
    Eigen::VectorXd q(2);
    q << truth.x(), truth.y();
    const IkProblem problem = targets_from_q(model, q);
    const IkSolution sol = solve_ik(model, problem);
    CHECK(sol.converged);
    CHECK(sol.residual_rms < 1e-6);
    // The elbow-flip twin (q1 + q2 both feasible mirrored) can also solve the
    // tip, but the elbow keypoint pins the configuration uniquely.
    CHECK(std::abs(sol.q_star[0] - truth.x()) < 1e-5);
    CHECK(std::abs(sol.q_star[1] - truth.y()) < 1e-5);
  }
}

TEST_CASE("unreachable targets finish inside limits without convergence") {
  const KinematicModel model = planar();
  IkProblem problem;
  problem.targets.resize(3, 3);
  problem.targets << 0, 0, 0, 1, 0, 0, 5, 0, 0;  // tip 5 m out: arm length is 2
  problem.weights = Eigen::VectorXd::Ones(3);
  problem.q_init = Eigen::VectorXd::Zero(2);
  const IkSolution sol = solve_ik(model, problem);
  CHECK_FALSE(sol.converged);
  CHECK(sol.residual_rms > 1.0);
  CHECK(sol.q_star[0] >= -2.0);
  CHECK(sol.q_star[0] <= 2.0);
  CHECK(sol.q_star[1] >= -2.0);
  CHECK(sol.q_star[1] <= 2.0);
}

TEST_CASE("every accepted iterate respects the limits") {
  const KinematicModel model = planar();
  // Ask for a tip pose that drags the shoulder against its +2 rad stop.
  IkProblem problem;
  problem.targets.resize(3, 3);
  const double a = 2.3;  // outside the feasible shoulder range
  problem.targets << 0, 0, 0, std::cos(a), std::sin(a), 0, 2.0 * std::cos(a), 2.0 * std::sin(a), 0;
  problem.weights = Eigen::VectorXd::Ones(3);
  problem.q_init = Eigen::VectorXd::Zero(2);

  IkOptions options;
  std::vector<Eigen::VectorXd> iterates;
  options.iterate_observer = [&](const Eigen::VectorXd& q) { iterates.push_back(q); };
  const IkSolution sol = solve_ik(model, problem, options);
  CHECK(iterates.size() >= 2);
  for (const Eigen::VectorXd& q : iterates) {
    for (int j = 0; j < 2; ++j) {
      CHECK(q[j] >= -2.0);
      CHECK(q[j] <= 2.0);
    }
  }
  CHECK(sol.q_star[0] <= 2.0);
  CHECK(sol.q_star[0] >= 1.8);  // pushed toward the stop
}

TEST_CASE("grid search oracle agrees on the optimal residual") {
  const KinematicModel model = planar();
  DeterministicRng rng(90210);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd q(2);
    q << rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8);
    IkProblem problem = targets_from_q(model, q);
    // Perturb the targets so the optimum is strictly interior but nonzero.
    problem.targets(2, 0) += 0.05;
    problem.targets(1, 1) -= 0.03;
    const IkSolution sol = solve_ik(model, problem);

    // Brute force on a 0.01 rad grid (the acceptance gate runs 0.001).
    double best = 1e300;
    for (double q1 = -2.0; q1 <= 2.0; q1 += 0.01) {
      for (double q2 = -2.0; q2 <= 2.0; q2 += 0.01) {
        Eigen::VectorXd candidate(2);
        candidate << q1, q2;
        const Eigen::MatrixX3d p = forward_kinematics(model, candidate);
        const double rms = std::sqrt((p - problem.targets).rowwise().squaredNorm().sum() / 3.0);
        best = std::min(best, rms);
      }
    }
    CHECK(sol.residual_rms <= best + 1e-3);
  }
}

TEST_CASE("warm starts cut iterations on nearby targets") {
  const KinematicModel model = humanoid();
  Eigen::VectorXd q0 = 0.5 * (model.lower_limits() + model.upper_limits());
  Eigen::VectorXd q1 = q0;
  for (int j = 0; j < model.dof(); ++j) q1[j] += 0.02 * std::sin(j + 1.0);

  IkProblem cold;
  cold.targets = forward_kinematics(model, q1);
  cold.weights = Eigen::VectorXd::Ones(model.num_keypoints());
  cold.q_init = Eigen::VectorXd::Zero(model.dof());
  for (int j = 0; j < model.dof(); ++j) {
    cold.q_init[j] = std::max(model.lower_limits()[j],
                              std::min(model.upper_limits()[j], cold.q_init[j]));
  }
  const IkSolution cold_sol = solve_ik(model, cold);

  IkProblem warm = cold;
  warm.q_init = q0;  // one small step away from the answer
  const IkSolution warm_sol = solve_ik(model, warm);
  CHECK(warm_sol.converged);
  CHECK(warm_sol.iterations <= cold_sol.iterations);
  CHECK((warm_sol.q_star - q1).norm() < 1e-4);
}

TEST_CASE("multi start never loses to the single start") {
  const KinematicModel model = planar();
  Eigen::VectorXd q(2);
  q << 1.4, -1.7;
  IkProblem problem = targets_from_q(model, q);
  problem.q_init << -1.9, 1.9;  // deliberately terrible start

  IkOptions single;
  const IkSolution base = solve_ik(model, problem, single);
  IkOptions multi;
  multi.multi_start = true;
  multi.multi_start_seeds = 6;
  multi.seed = 31;
  const IkSolution best = solve_ik(model, problem, multi);
  CHECK(best.residual_rms <= base.residual_rms + 1e-12);
  // Rerunning multi-start is deterministic.
  const IkSolution rerun = solve_ik(model, problem, multi);
  CHECK(rerun.residual_rms == best.residual_rms);
  CHECK((rerun.q_star - best.q_star).norm() == 0.0);
}

TEST_CASE("weight rules and input validation") {
  const KinematicModel model = humanoid();
  IkProblem problem;
  problem.targets = Eigen::MatrixX3d::Zero(model.num_keypoints(), 3);
  problem.weights = Eigen::VectorXd::Zero(model.num_keypoints());
  problem.q_init = 0.5 * (model.lower_limits() + model.upper_limits());
  CHECK_THROWS_AS(solve_ik(model, problem), ValidationError);  // zero positive weights

  problem.weights[0] = 1.0;
  problem.weights[5] = 1.0;
  problem.weights[9] = 1.0;
  CHECK_THROWS_AS(solve_ik(model, problem), ValidationError);  // three < required four

  problem.weights[12] = 1.0;
  CHECK_NOTHROW(solve_ik(model, problem));

  problem.weights[3] = -0.5;
  CHECK_THROWS_AS(solve_ik(model, problem), ValidationError);
  problem.weights[3] = 0.0;

  // The 3-keypoint planar model only needs one positive weight.
  const KinematicModel small = planar();
  IkProblem tiny;
  tiny.targets = Eigen::MatrixX3d::Zero(3, 3);
  tiny.targets(2, 0) = 1.2;
  tiny.weights = Eigen::VectorXd::Zero(3);
  tiny.weights[2] = 1.0;
  tiny.q_init = Eigen::VectorXd::Zero(2);
  CHECK_NOTHROW(solve_ik(small, tiny));

  IkProblem wrong = tiny;
  wrong.q_init.resize(5);
  wrong.q_init.setZero();
  CHECK_THROWS_AS(solve_ik(small, wrong), ValidationError);

  IkProblem outside = tiny;
  outside.q_init << 3.0, 0.0;  // beyond the +2 limit
  CHECK_THROWS_AS(solve_ik(small, outside), ValidationError);
}

TEST_SUITE_END();
