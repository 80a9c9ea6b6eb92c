#include "kinerec/ik_solver.hpp"

#include <algorithm>
#include <cmath>

#include "kinerec/errors.hpp"
#include "kinerec/rng.hpp"

namespace kinerec {
namespace {

constexpr double kLimitMargin = 1e-6;  // rad, keeps iterates strictly interior
constexpr double kDampingMax = 1e12;

Eigen::VectorXd clamp_to_limits(const Eigen::VectorXd& q, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi) {
  return q.cwiseMax(lo).cwiseMin(hi);
}

struct RunResult {
  Eigen::VectorXd q;
  double cost = 0.0;
  int iterations = 0;
};

/// One damped Gauss-Newton descent from q_start (already interior).
RunResult run_descent(const KinematicModel& model, const IkProblem& problem,
                      const IkOptions& options, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi, const Eigen::VectorXd& q_start, double sum_w) {
  const int n = model.num_keypoints();
  const int dof = model.dof();

  auto weighted_cost = [&](const Eigen::VectorXd& q, int iteration) {
    const Eigen::MatrixX3d fk = forward_kinematics(model, q);
    if (!fk.allFinite()) {
      throw NumericError("non-finite forward kinematics at iteration " +
                         std::to_string(iteration));
    }
    double cost = 0.0;
    for (int k = 0; k < n; ++k) {
      cost += problem.weights[k] * (fk.row(k) - problem.targets.row(k)).squaredNorm();
    }
    return cost;
  };

  RunResult run;
  run.q = q_start;
  if (options.iterate_observer) options.iterate_observer(run.q);
  run.cost = weighted_cost(run.q, 0);
  double rms = std::sqrt(run.cost / sum_w);
  double damping = options.damping_init;

  for (int iter = 1; iter <= options.max_iters; ++iter) {
    run.iterations = iter;
    const Eigen::MatrixX3d fk = forward_kinematics(model, run.q);
    const Eigen::MatrixXd jac = keypoint_jacobian(model, run.q);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dof, dof);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dof);
    for (int k = 0; k < n; ++k) {
      const double w = problem.weights[k];
      if (w == 0.0) continue;
      const auto block = jac.middleRows(3 * k, 3);
      const Eigen::Vector3d r = (problem.targets.row(k) - fk.row(k)).transpose();
      h.noalias() += w * block.transpose() * block;
      g.noalias() += w * block.transpose() * r;
    }

    bool accepted = false;
    while (damping <= kDampingMax) {
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += damping;
      const Eigen::VectorXd step = damped.ldlt().solve(g);
      const Eigen::VectorXd q_try = clamp_to_limits(run.q + step, lo, hi);
      const double cost_try = weighted_cost(q_try, iter);
      if (cost_try < run.cost) {
        run.q = q_try;
        run.cost = cost_try;
        // The floor keeps (H + lambda I)^-1 from amplifying micrometer-level
        // residual components into large steps along weakly observed joint
        // directions (sigma_min ~ 1e-4 near singular poses): lambda >= 1e-6
        // caps such steps at ~500x the converged residual while perturbing
        // well-conditioned directions (sigma ~ 1) only at the 1e-6 level.
        damping = std::max(damping * 0.5, 1e-6);
        accepted = true;
        if (options.iterate_observer) options.iterate_observer(run.q);
        break;
      }
      damping *= 4.0;
    }
    if (!accepted) break;
    const double new_rms = std::sqrt(run.cost / sum_w);
    const bool settled = std::abs(rms - new_rms) < options.tol_rms;
    rms = new_rms;
    if (settled) break;
  }
  return run;
}

}  // namespace

IkSolution solve_ik(const KinematicModel& model, const IkProblem& problem,
                    const IkOptions& options) {
  const int n = model.num_keypoints();
  const int dof = model.dof();
  if (problem.targets.rows() != n) {
    throw ValidationError("targets have " + std::to_string(problem.targets.rows()) +
                          " rows, model has " + std::to_string(n) + " keypoints");
  }
  if (problem.weights.size() != n) {
    throw ValidationError("weights have " + std::to_string(problem.weights.size()) +
                          " entries, model has " + std::to_string(n) + " keypoints");
  }
  if (!problem.targets.allFinite() || !problem.weights.allFinite()) {
    throw ValidationError("targets and weights must be finite");
  }
  int positive = 0;
  double sum_w = 0.0;
  for (int k = 0; k < n; ++k) {
    if (problem.weights[k] < 0.0) throw ValidationError("keypoint weights must be nonnegative");
    if (problem.weights[k] > 0.0) ++positive;
    sum_w += problem.weights[k];
  }
  const int required = n >= 4 ? 4 : 1;
  if (positive < required) {
    throw ValidationError("under-constrained problem: " + std::to_string(positive) +
                          " positively weighted keypoints, need at least " +
                          std::to_string(required));
  }
  if (problem.q_init.size() != dof) {
    throw ValidationError("q_init has " + std::to_string(problem.q_init.size()) +
                          " values, model has " + std::to_string(dof) + " degrees of freedom");
  }
  const Eigen::VectorXd lower = model.lower_limits();
  const Eigen::VectorXd upper = model.upper_limits();
  for (int d = 0; d < dof; ++d) {
    if (problem.q_init[d] < lower[d] || problem.q_init[d] > upper[d]) {
      throw ValidationError("q_init violates the limits of joint '" +
                            model.joints[model.dof_joints[d]].name + "'");
    }
  }
  Eigen::VectorXd lo = lower.array() + kLimitMargin;
  Eigen::VectorXd hi = upper.array() - kLimitMargin;
  for (int d = 0; d < dof; ++d) {
    if (lo[d] > hi[d]) lo[d] = hi[d] = 0.5 * (lower[d] + upper[d]);
  }

  RunResult best =
      run_descent(model, problem, options, lo, hi, clamp_to_limits(problem.q_init, lo, hi), sum_w);
  if (options.multi_start) {
    DeterministicRng rng(splitmix64(options.seed ^ 0x696b53746172740aull));
    for (int s = 0; s < options.multi_start_seeds; ++s) {
      Eigen::VectorXd q0(dof);
      for (int d = 0; d < dof; ++d) q0[d] = rng.uniform(lo[d], hi[d]);
      const RunResult run = run_descent(model, problem, options, lo, hi, q0, sum_w);
      if (run.cost < best.cost) best = run;
    }
  }

  IkSolution solution;
  solution.q_star = best.q;
  solution.residual_rms = std::sqrt(best.cost / sum_w);
  solution.iterations = best.iterations;
  solution.converged = solution.residual_rms <= options.converged_rms;
  return solution;
}

Eigen::MatrixX3d center_targets(const Eigen::MatrixX3d& camera_3d_absolute, int root_index) {
  if (root_index < 0 || root_index >= camera_3d_absolute.rows()) {
    throw ValidationError("root index out of range");
  }
  Eigen::MatrixX3d out = camera_3d_absolute;
  const Eigen::RowVector3d root = out.row(root_index);
  out.rowwise() -= root;
  out.row(root_index).setZero();
  return out;
}

}  // namespace kinerec
