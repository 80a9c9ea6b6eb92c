#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "kinerec/kinematic_model.hpp"

namespace kinerec {

/// Inverse-kinematics problem: minimize sum_k w_k ||FK_k(q) - target_k||^2
/// subject to the model's box joint limits, with the root fixed at the origin.
/// Targets are root-relative (the root keypoint target is (0,0,0)).
struct IkProblem {
  Eigen::MatrixX3d targets;   ///< N x 3 meters, root-relative
  Eigen::VectorXd weights;    ///< N nonnegative; 0 disables a keypoint
  JointConfiguration q_init;  ///< must respect the joint limits
};

struct IkOptions {
  int max_iters = 100;
  double tol_rms = 1e-7;        ///< terminate when residual_rms changes less than this (meters)
  double damping_init = 1e-3;
  double converged_rms = 1e-6;  ///< residual level below which targets count as reached (meters)
  bool multi_start = false;     ///< add random restarts for degenerate frames
  int multi_start_seeds = 5;
  std::uint64_t seed = 0;
  /// Called with every accepted iterate (including the start point of each
  /// run); lets tests instrument joint-limit safety.
  std::function<void(const Eigen::VectorXd&)> iterate_observer;
};

struct IkSolution {
  JointConfiguration q_star;
  double residual_rms = 0.0;  ///< sqrt(sum_k w_k ||r_k||^2 / sum_k w_k), meters
  int iterations = 0;
  bool converged = false;  ///< residual_rms <= converged_rms; false flags infeasible targets
};

/// Damped Gauss-Newton with projected steps: each accepted step is clamped to
/// [q_min + eps, q_max - eps] (eps = 1e-6 rad), damping halves on accepted
/// steps and quadruples on rejected ones, and the accepted cost sequence is
/// non-increasing. Requires at least min(4, N) positively weighted keypoints
/// (4 when the model has 4 or more keypoints, 1 otherwise).
IkSolution solve_ik(const KinematicModel& model, const IkProblem& problem,
                    const IkOptions& options = {});

/// Subtracts the root row from every row; the root row of the result is
/// exactly zero. Idempotent.
Eigen::MatrixX3d center_targets(const Eigen::MatrixX3d& camera_3d_absolute, int root_index = 0);

}  // namespace kinerec
