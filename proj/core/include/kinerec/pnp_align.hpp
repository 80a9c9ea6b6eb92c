#pragma once

#include <optional>

#include <Eigen/Dense>

#include "kinerec/camera_geometry.hpp"
#include "kinerec/geometry.hpp"

namespace kinerec {

/// Pose-from-projection problem: find the rigid transform (R, t) mapping
/// root-frame model points into the camera frame so that their pinhole
/// projections match the observed pixels.
struct PnpProblem {
  Eigen::MatrixX3d local_points;  ///< N x 3 meters, root frame (FK at identity root)
  Eigen::MatrixX2d pixels;        ///< N x 2 observed detections
  Eigen::VectorXd weights;        ///< N nonnegative; 0 disables a point
  PinholeIntrinsics intrinsics;
  std::optional<RigidTransform> pose_init;  ///< warm start; replaces hypothesis search
};

struct PnpOptions {
  int max_iters = 100;
  double tol_px = 1e-6;  ///< terminate when reproj_rms changes less than this (pixels)
};

struct PnpSolution {
  RigidTransform cam_from_local;  ///< rotation + translation of Eq. "R, t"
  double reproj_rms = 0.0;        ///< weighted RMS reprojection error, pixels
  int iterations = 0;  ///< total LM iterations (summed over polished hypotheses)
  bool converged = false;  ///< reached stationarity before exhausting max_iters
};

/// Levenberg-Marquardt on reprojection residuals over a 6-parameter pose
/// (axis-angle increment composed onto the rotation from the left, additive
/// translation). Without pose_init, every cheirality-valid member of the 24
/// axis-aligned orientation hypotheses -- depth seeded from fx * local extent
/// / pixel extent, lateral offsets from the back-projected pixel centroid --
/// is polished and the lowest-residual result wins, stopping early once a
/// run settles below tol_px. Requires >= 4 positively weighted, non-collinear
/// local points.
PnpSolution solve_pnp(const PnpProblem& problem, const PnpOptions& options = {});

struct MetricScaleReport {
  PnpSolution base;
  PnpSolution scaled;
  double translation_error_m = 0.0;  ///< || t_scaled - s * t_base ||
  double rotation_error_rad = 0.0;   ///< geodesic angle between the two rotations
  bool passed = false;
};

/// Test utility for the metric-scale mechanism: re-solves with local points
/// scaled by s and checks translation scales by s while rotation is unchanged,
/// both within tol.
MetricScaleReport metric_scale_check(const PnpProblem& problem, double s,
                                     const PnpOptions& options = {}, double tol = 1e-6);

}  // namespace kinerec
