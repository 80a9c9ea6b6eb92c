#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kinerec/camera_geometry.hpp"
#include "kinerec/dataset_synth.hpp"
#include "kinerec/ik_solver.hpp"
#include "kinerec/kinematic_model.hpp"
#include "kinerec/lifting.hpp"
#include "kinerec/pnp_align.hpp"
#include "kinerec/trajectory_post.hpp"

namespace kinerec {

enum class Alignment { kNone, kRoot };

/// Mean per-joint position error over all frames and joints, in millimeters
/// (inputs are meters). alignment = kRoot subtracts the root row from both
/// sides first. An empty joint_mask means all joints; otherwise it must have
/// one include-bit per joint.
double mpjpe_mm(const std::vector<Eigen::MatrixX3d>& pred, const std::vector<Eigen::MatrixX3d>& gt,
                Alignment alignment = Alignment::kRoot, int root_index = 0,
                const std::vector<bool>& joint_mask = {});

/// Per-joint mean position error, millimeters, same alignment semantics.
std::vector<double> per_joint_error_mm(const std::vector<Eigen::MatrixX3d>& pred,
                                       const std::vector<Eigen::MatrixX3d>& gt,
                                       Alignment alignment = Alignment::kRoot,
                                       int root_index = 0);

/// Fraction of visible joints whose pixel error is at most
/// threshold * max(bbox width, bbox height), pooled over all frames.
double pck(const std::vector<Eigen::MatrixX2d>& pred, const std::vector<Eigen::MatrixX2d>& gt,
           const std::vector<Eigen::Vector4d>& bboxes,
           const std::vector<std::vector<bool>>& visibility, double threshold,
           const std::vector<bool>& joint_mask = {});

/// Object keypoint similarity for one frame: mean over visible joints of
/// exp(-d^2 / (2 s^2 kappa^2)) with s = sqrt(bbox area).
double oks(const Eigen::MatrixX2d& pred, const Eigen::MatrixX2d& gt, const Eigen::Vector4d& bbox,
           const std::vector<bool>& visibility, double kappa = 0.1,
           const std::vector<bool>& joint_mask = {});

/// Average precision: mean over thresholds {0.50, 0.55, ..., 0.95} of the
/// fraction of frames whose OKS reaches the threshold. Frames without visible
/// joints are skipped.
double oks_ap(const std::vector<Eigen::MatrixX2d>& pred, const std::vector<Eigen::MatrixX2d>& gt,
              const std::vector<Eigen::Vector4d>& bboxes,
              const std::vector<std::vector<bool>>& visibility, double kappa = 0.1,
              const std::vector<bool>& joint_mask = {});

/// Mean absolute end-effector distance to the intended contact point over the
/// half-open frame window [window_begin, window_end), meters.
double spatial_alignment_error(const std::vector<Eigen::Vector3d>& effector_traj,
                               const Eigen::Vector3d& contact_point, int window_begin,
                               int window_end);

struct EvalReport {
  double mpjpe_mm = 0.0;
  std::vector<std::pair<double, double>> pck;  ///< (threshold, fraction), ascending
  double ap = 0.0;
  std::vector<double> per_joint_errors_mm;
  int frame_count = 0;
};

std::string serialize_eval_report(const EvalReport& report, const std::string& provenance = "");

struct RoundtripOptions {
  std::string camera_id = "side_0";  ///< the single view used for recovery
  IkOptions ik;
  PnpOptions pnp;
  double ema_alpha = 0.3;
  double fps = 30.0;
};

/// End-to-end recovery quality plus the recovered trajectories. The against-
/// ground-truth comparisons (joint RMS, root RMS, re-FK MPJPE) use the raw
/// per-frame estimates; `processed` carries the smoothed egocentric output.
struct RoundtripReport {
  EvalReport eval;
  double joint_rms_rad = 0.0;
  double root_pos_rms_m = 0.0;
  double root_rot_rms_rad = 0.0;
  double refk_mpjpe_mm = 0.0;
  int frame_count = 0;
  int ik_converged_count = 0;
  int pnp_converged_count = 0;
  int failed_count = 0;  ///< frames recovered by carry-forward instead of solving
  RecoveredTrajectory raw;
  RecoveredTrajectory processed;
};

/// Full pipeline exercise on synthetic ground truth:
/// FK -> project -> noise -> (lifter or ground-truth 3D) -> center -> IK ->
/// PnP -> EMA -> egocentric. With lifter == nullptr the 3D targets are the
/// observed pixels backprojected at true depth and mapped into the root
/// frame via the true root pose (exact when noise-free); with a lifter they
/// are its camera-frame root-relative predictions. Frames with fewer than 4
/// usable keypoints, or where a solver fails, carry the previous estimate
/// forward with their convergence flags cleared.
RoundtripReport roundtrip_eval(const KinematicModel& model, const std::vector<Camera>& rig,
                               const std::vector<JointConfiguration>& q_sequence,
                               const std::vector<RigidTransform>& root_sequence,
                               const NoiseSpec& noise, const LifterNetwork* lifter = nullptr,
                               const RoundtripOptions& options = {});

std::string serialize_roundtrip_report(const RoundtripReport& report,
                                       const std::string& provenance = "");

}  // namespace kinerec
