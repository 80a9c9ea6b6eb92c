#include "kinerec/pnp_align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kinerec/errors.hpp"

namespace kinerec {
namespace {

constexpr double kDampingMax = 1e12;

struct Evaluation {
  double cost = std::numeric_limits<double>::infinity();
  bool cheirality_ok = false;
};

Evaluation evaluate(const PnpProblem& problem, const RigidTransform& pose) {
  Evaluation ev;
  ev.cheirality_ok = pose.translation.z() > 0.0;
  double cost = 0.0;
  for (Eigen::Index i = 0; i < problem.local_points.rows(); ++i) {
    const double w = problem.weights[i];
    if (w == 0.0) continue;
    const Eigen::Vector3d p = pose.apply(problem.local_points.row(i).transpose());
    if (p.z() <= problem.intrinsics.z_near) {
      ev.cheirality_ok = false;
      return ev;
    }
    const Eigen::Vector2d px = project_camera_point(problem.intrinsics, p);
    cost += w * (px - problem.pixels.row(i).transpose()).squaredNorm();
  }
  if (!std::isfinite(cost)) throw NumericError("non-finite reprojection residual");
  ev.cost = cost;
  return ev;
}

RigidTransform seed_pose(const PnpProblem& problem, const Eigen::Matrix3d& rotation) {
  // Weighted pixel bbox diagonal vs rotated-point lateral bbox diagonal give
  // the depth scale; the pixel centroid gives the lateral offsets.
  double min_u = std::numeric_limits<double>::infinity(), max_u = -min_u;
  double min_v = min_u, max_v = -min_u;
  Eigen::Vector2d centroid_px = Eigen::Vector2d::Zero();
  Eigen::Vector3d centroid_local = Eigen::Vector3d::Zero();
  double min_x = min_u, max_x = -min_u, min_y = min_u, max_y = -min_u;
  double sum_w = 0.0;
  for (Eigen::Index i = 0; i < problem.local_points.rows(); ++i) {
    const double w = problem.weights[i];
    if (w == 0.0) continue;
    sum_w += w;
    const Eigen::Vector2d px = problem.pixels.row(i).transpose();
    min_u = std::min(min_u, px.x());
    max_u = std::max(max_u, px.x());
    min_v = std::min(min_v, px.y());
    max_v = std::max(max_v, px.y());
    centroid_px += w * px;
    const Eigen::Vector3d p = rotation * problem.local_points.row(i).transpose();
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
    centroid_local += w * problem.local_points.row(i).transpose();
  }
  centroid_px /= sum_w;
  centroid_local /= sum_w;
  const double extent_px = std::hypot(max_u - min_u, max_v - min_v);
  const double extent_3d = std::hypot(max_x - min_x, max_y - min_y);
  double depth = 1.0;
  if (extent_px > 1e-9 && extent_3d > 1e-12) {
    depth = problem.intrinsics.fx * extent_3d / extent_px;
  }
  depth = std::max(depth, 10.0 * problem.intrinsics.z_near);
  RigidTransform pose;
  pose.rotation = Eigen::Quaterniond(rotation);
  pose.translation = backproject(problem.intrinsics, centroid_px, depth) -
                     rotation * centroid_local;
  return pose;
}

}  // namespace

PnpSolution solve_pnp(const PnpProblem& problem, const PnpOptions& options) {
  const Eigen::Index n = problem.local_points.rows();
  if (problem.pixels.rows() != n || problem.weights.size() != n) {
    throw ValidationError("local points, pixels, and weights must have matching sizes");
  }
  if (!problem.local_points.allFinite() || !problem.pixels.allFinite() ||
      !problem.weights.allFinite()) {
    throw ValidationError("problem contains non-finite values");
  }
  int positive = 0;
  double sum_w = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (problem.weights[i] < 0.0) throw ValidationError("point weights must be nonnegative");
    if (problem.weights[i] > 0.0) ++positive;
    sum_w += problem.weights[i];
    mean += problem.weights[i] * problem.local_points.row(i).transpose();
  }
  if (positive < 4) {
    throw ValidationError("under-constrained problem: " + std::to_string(positive) +
                          " positively weighted points, need at least 4");
  }
  mean /= sum_w;
  // Collinear points leave the pose unobservable: check the weighted scatter.
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (problem.weights[i] == 0.0) continue;
    const Eigen::Vector3d d = problem.local_points.row(i).transpose() - mean;
    scatter += problem.weights[i] * d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  if (eig.eigenvalues()[1] < 1e-12 * std::max(eig.eigenvalues()[2], 1e-300)) {
    throw ValidationError("local points are collinear: pose is unobservable");
  }

  struct PolishResult {
    RigidTransform pose;
    double rms = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool settled = false;
  };
  const auto polish = [&](RigidTransform pose) -> PolishResult {
    PolishResult result;
    Evaluation current = evaluate(problem, pose);
    if (!current.cheirality_ok) {
      throw ValidationError("initial pose places points behind the camera");
    }
    double rms = std::sqrt(current.cost / sum_w);
    double damping = 1e-3;
    bool settled = false;

    for (int iter = 1; iter <= options.max_iters; ++iter) {
      result.iterations = iter;
      Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
      const Eigen::Matrix3d r_mat = pose.rotation.toRotationMatrix();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double w = problem.weights[i];
        if (w == 0.0) continue;
        const Eigen::Vector3d rotated = r_mat * problem.local_points.row(i).transpose();
        const Eigen::Vector3d p = rotated + pose.translation;
        const Eigen::Vector2d e =
            project_camera_point(problem.intrinsics, p) - problem.pixels.row(i).transpose();
        Eigen::Matrix<double, 2, 3> j_proj;
        const double iz = 1.0 / p.z();
        j_proj << problem.intrinsics.fx * iz, 0.0, -problem.intrinsics.fx * p.x() * iz * iz, 0.0,
            problem.intrinsics.fy * iz, -problem.intrinsics.fy * p.y() * iz * iz;
        Eigen::Matrix3d skew;
        skew << 0.0, -rotated.z(), rotated.y(), rotated.z(), 0.0, -rotated.x(), -rotated.y(),
            rotated.x(), 0.0;
        Eigen::Matrix<double, 2, 6> jac;
        jac.block<2, 3>(0, 0) = -j_proj * skew;  // d e / d(axis-angle increment)
        jac.block<2, 3>(0, 3) = j_proj;          // d e / d(translation)
        h.noalias() += w * jac.transpose() * jac;
        g.noalias() += w * jac.transpose() * e;
      }

      bool accepted = false;
      while (damping <= kDampingMax) {
        Eigen::Matrix<double, 6, 6> damped = h;
        damped.diagonal().array() += damping;
        const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(-g);
        RigidTransform trial;
        const Eigen::Vector3d omega = step.head<3>();
        const double angle = omega.norm();
        trial.rotation = angle < 1e-18
                             ? pose.rotation
                             : Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle)) *
                                   pose.rotation;
        trial.rotation.normalize();
        trial.translation = pose.translation + step.tail<3>();
        const Evaluation ev = evaluate(problem, trial);
        if (ev.cheirality_ok && ev.cost < current.cost) {
          pose = trial;
          current = ev;
          damping = std::max(damping * 0.5, 1e-15);
          accepted = true;
          break;
        }
        damping *= 4.0;
      }
      if (!accepted) {
        settled = true;  // no improving step exists: numerically stationary
        break;
      }
      const double new_rms = std::sqrt(current.cost / sum_w);
      if (std::abs(rms - new_rms) < options.tol_px) {
        rms = new_rms;
        settled = true;
        break;
      }
      rms = new_rms;
    }
    result.pose = pose;
    result.rms = rms;
    result.settled = settled;
    return result;
  };

  PolishResult best;
  int total_iterations = 0;
  if (problem.pose_init) {
    RigidTransform start = *problem.pose_init;
    start.rotation.normalize();
    best = polish(start);
    total_iterations = best.iterations;
  } else {
    // A single local refinement can stall in a reprojection basin far from
    // the optimum when the true rotation is distant from every seed. Polish
    // each cheirality-valid hypothesis and keep the lowest residual; stop
    // early once one reaches the convergence tolerance.
    bool found = false;
    for (const Eigen::Matrix3d& rotation : cube_rotations()) {
      const RigidTransform candidate = seed_pose(problem, rotation);
      if (!evaluate(problem, candidate).cheirality_ok) continue;
      const PolishResult run = polish(candidate);
      total_iterations += run.iterations;
      if (!found || run.rms < best.rms) {
        best = run;
        found = true;
      }
      if (best.settled && best.rms < options.tol_px) break;
    }
    if (!found) {
      throw ValidationError("no orientation hypothesis places the points in front of the camera");
    }
  }

  PnpSolution solution;
  solution.cam_from_local = best.pose;
  solution.reproj_rms = best.rms;
  solution.iterations = total_iterations;
  solution.converged = best.settled;
  return solution;
}

MetricScaleReport metric_scale_check(const PnpProblem& problem, double s,
                                     const PnpOptions& options, double tol) {
  if (s <= 0.0) throw ValidationError("scale factor must be positive");
  MetricScaleReport report;
  report.base = solve_pnp(problem, options);
  PnpProblem scaled = problem;
  scaled.local_points *= s;
  report.scaled = solve_pnp(scaled, options);
  report.translation_error_m =
      (report.scaled.cam_from_local.translation - s * report.base.cam_from_local.translation)
          .norm();
  report.rotation_error_rad = quat_geodesic_angle(report.scaled.cam_from_local.rotation,
                                                  report.base.cam_from_local.rotation);
  report.passed = report.translation_error_m <= tol && report.rotation_error_rad <= tol;
  return report;
}

}  // namespace kinerec
