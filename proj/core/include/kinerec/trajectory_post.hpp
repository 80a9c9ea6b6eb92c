#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinerec/geometry.hpp"
#include "kinerec/kinematic_model.hpp"

namespace kinerec {

/// One timestep of a recovered global motion: floating-base pose plus the
/// internal joint vector, with per-stage convergence flags.
struct TrajectoryFrame {
  Eigen::Vector3d root_pos = Eigen::Vector3d::Zero();
  Eigen::Quaterniond root_rot{1.0, 0.0, 0.0, 0.0};
  Eigen::VectorXd qpos;
  bool ik_converged = true;
  bool pnp_converged = true;
};

/// Time series of (root position, root rotation, qpos) in the motion-export
/// layout consumed by downstream whole-body tracking.
struct RecoveredTrajectory {
  double fps = 30.0;
  std::vector<std::string> joint_names;
  std::vector<TrajectoryFrame> frames;
  /// Set by to_egocentric when the frame-0 heading was undefined (body x-axis
  /// vertical) and the identity heading was used instead.
  bool heading_fallback = false;
};

/// Checks the structural invariants every trajectory must satisfy: fps > 0,
/// at least one frame, per-frame qpos length equal to joint_names, unit
/// quaternions within 1e-9, and finite values throughout. Throws
/// ValidationError naming the offending frame.
void validate_trajectory(const RecoveredTrajectory& trajectory);

/// Additionally checks qpos against the model's joint limits (the file format
/// alone cannot; limits live in the model).
void validate_trajectory(const RecoveredTrajectory& trajectory, const KinematicModel& model);

/// Exponential moving average with state seeded from the first frame:
/// s_0 = t_0 and s_k = alpha*t_k + (1-alpha)*s_{k-1} on root position and
/// qpos; rotations use a hemisphere-aligned normalized linear blend with the
/// same weights. alpha must lie in (0, 1]; alpha = 1 is the identity filter.
RecoveredTrajectory ema_smooth(const RecoveredTrajectory& trajectory, double alpha);

/// Re-expresses every frame relative to the frame-0 base: its root position
/// projected onto the ground plane (z -> 0) and its yaw-only heading. Frame 0
/// of the output sits at (0,0,h0) with yaw 0. Degenerate heading extraction
/// falls back to the identity heading and sets heading_fallback.
RecoveredTrajectory to_egocentric(const RecoveredTrajectory& trajectory);

/// Repairs runs of flagged-failure frames (ik or pnp not converged). Runs of
/// at most max_gap interior frames are filled by linear interpolation of
/// root_pos/qpos and spherical interpolation of root_rot between the bounding
/// good frames (original flags kept so failures stay countable). Longer runs
/// split the trajectory; leading/trailing failed frames are trimmed. Returns
/// the resulting segments in time order (empty when no frame is usable).
std::vector<RecoveredTrajectory> interpolate_gaps(const RecoveredTrajectory& trajectory,
                                                  int max_gap);

/// Canonical motion-file document: {"format":"gmr-motion/1", fps, joint_names,
/// frames:[{root_pos:[3], root_rot:[4 w,x,y,z], qpos:[dof]}]}. A non-empty
/// `provenance` string is appended as an informational key that import
/// ignores. Convergence flags are not part of the format.
std::string serialize_gmr(const RecoveredTrajectory& trajectory,
                          const std::string& provenance = "");

void export_gmr(const RecoveredTrajectory& trajectory, const std::string& path,
                const std::string& provenance = "");

/// Parses and validates a motion document. Quaternion norms within 1e-9 of
/// unit pass through; deviations up to 1e-6 are renormalized; anything worse
/// is rejected naming the frame index. Flags on imported frames are true.
RecoveredTrajectory parse_gmr(const std::string& json_text);

RecoveredTrajectory import_gmr(const std::string& path);

}  // namespace kinerec
