#include "kinerec/metrics_eval.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

#include "kinerec/errors.hpp"
#include "kinerec/serialization.hpp"

namespace kinerec {
namespace {

void check_mask(const std::vector<bool>& mask, Eigen::Index n, const char* what) {
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != n) {
    throw ValidationError(std::string(what) + ": joint mask size does not match joint count");
  }
}

bool masked_in(const std::vector<bool>& mask, Eigen::Index j) {
  return mask.empty() || mask[static_cast<std::size_t>(j)];
}

void check_paired_3d(const std::vector<Eigen::MatrixX3d>& pred,
                     const std::vector<Eigen::MatrixX3d>& gt) {
  if (pred.size() != gt.size()) throw ValidationError("prediction/ground-truth count mismatch");
  if (pred.empty()) throw ValidationError("no frames to evaluate");
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].rows() != gt[k].rows()) {
      throw ValidationError("frame " + std::to_string(k) + ": keypoint count mismatch");
    }
    if (k > 0 && pred[k].rows() != pred[0].rows()) {
      throw ValidationError("frame " + std::to_string(k) + ": inconsistent keypoint count");
    }
  }
}

Eigen::MatrixX3d aligned(const Eigen::MatrixX3d& points, Alignment alignment, int root_index) {
  if (alignment == Alignment::kNone) return points;
  if (root_index < 0 || root_index >= points.rows()) {
    throw ValidationError("root index out of range");
  }
  Eigen::MatrixX3d out = points;
  out.rowwise() -= points.row(root_index);
  return out;
}

double bbox_max_dim(const Eigen::Vector4d& bbox) {
  return std::max(bbox[2] - bbox[0], bbox[3] - bbox[1]);
}

double bbox_area(const Eigen::Vector4d& bbox) {
  return (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]);
}

/// The OKS threshold ladder {0.50, 0.55, ..., 0.95} as exact decimal ratios.
std::vector<double> oks_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return out;
}

}  // namespace

double mpjpe_mm(const std::vector<Eigen::MatrixX3d>& pred, const std::vector<Eigen::MatrixX3d>& gt,
                Alignment alignment, int root_index, const std::vector<bool>& joint_mask) {
  check_paired_3d(pred, gt);
  check_mask(joint_mask, pred[0].rows(), "mpjpe");
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Eigen::MatrixX3d p = aligned(pred[k], alignment, root_index);
    const Eigen::MatrixX3d g = aligned(gt[k], alignment, root_index);
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      if (!masked_in(joint_mask, j)) continue;
      sum += (p.row(j) - g.row(j)).norm();
      ++count;
    }
  }
  if (count == 0) throw ValidationError("mpjpe: joint mask excludes every joint");
  return 1000.0 * sum / static_cast<double>(count);
}

std::vector<double> per_joint_error_mm(const std::vector<Eigen::MatrixX3d>& pred,
                                       const std::vector<Eigen::MatrixX3d>& gt,
                                       Alignment alignment, int root_index) {
  check_paired_3d(pred, gt);
  const Eigen::Index n = pred[0].rows();
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Eigen::MatrixX3d p = aligned(pred[k], alignment, root_index);
    const Eigen::MatrixX3d g = aligned(gt[k], alignment, root_index);
    for (Eigen::Index j = 0; j < n; ++j) {
      sums[static_cast<std::size_t>(j)] += (p.row(j) - g.row(j)).norm();
    }
  }
  for (double& s : sums) s = 1000.0 * s / static_cast<double>(pred.size());
  return sums;
}

double pck(const std::vector<Eigen::MatrixX2d>& pred, const std::vector<Eigen::MatrixX2d>& gt,
           const std::vector<Eigen::Vector4d>& bboxes,
           const std::vector<std::vector<bool>>& visibility, double threshold,
           const std::vector<bool>& joint_mask) {
  if (!(threshold > 0.0)) throw ValidationError("pck threshold must be positive");
  if (pred.size() != gt.size() || pred.size() != bboxes.size() ||
      pred.size() != visibility.size()) {
    throw ValidationError("pck inputs disagree on frame count");
  }
  if (pred.empty()) throw ValidationError("no frames to evaluate");
  std::int64_t correct = 0;
  std::int64_t total = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Eigen::Index n = gt[k].rows();
    if (pred[k].rows() != n || static_cast<Eigen::Index>(visibility[k].size()) != n) {
      throw ValidationError("frame " + std::to_string(k) + ": keypoint count mismatch");
    }
    check_mask(joint_mask, n, "pck");
    const double max_dim = bbox_max_dim(bboxes[k]);
    if (!(max_dim > 0.0)) {
      throw ValidationError("frame " + std::to_string(k) + ": empty bounding box");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!visibility[k][static_cast<std::size_t>(j)] || !masked_in(joint_mask, j)) continue;
      ++total;
      if ((pred[k].row(j) - gt[k].row(j)).norm() <= threshold * max_dim) ++correct;
    }
  }
  if (total == 0) throw ValidationError("pck: no visible joints to evaluate");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double oks(const Eigen::MatrixX2d& pred, const Eigen::MatrixX2d& gt, const Eigen::Vector4d& bbox,
           const std::vector<bool>& visibility, double kappa,
           const std::vector<bool>& joint_mask) {
  const Eigen::Index n = gt.rows();
  if (pred.rows() != n || static_cast<Eigen::Index>(visibility.size()) != n) {
    throw ValidationError("oks inputs disagree on keypoint count");
  }
  check_mask(joint_mask, n, "oks");
  if (!(kappa > 0.0)) throw ValidationError("oks kappa must be positive");
  const double area = bbox_area(bbox);
  if (!(area > 0.0)) throw ValidationError("oks: empty bounding box");
  const double denom = 2.0 * area * kappa * kappa;  // 2 * s^2 * kappa^2 with s = sqrt(area)
  double sum = 0.0;
  std::int64_t count = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!visibility[static_cast<std::size_t>(j)] || !masked_in(joint_mask, j)) continue;
    const double d2 = (pred.row(j) - gt.row(j)).squaredNorm();
    sum += std::exp(-d2 / denom);
    ++count;
  }
  if (count == 0) throw ValidationError("oks: no visible joints");
  return sum / static_cast<double>(count);
}

double oks_ap(const std::vector<Eigen::MatrixX2d>& pred, const std::vector<Eigen::MatrixX2d>& gt,
              const std::vector<Eigen::Vector4d>& bboxes,
              const std::vector<std::vector<bool>>& visibility, double kappa,
              const std::vector<bool>& joint_mask) {
  if (gt.empty()) throw ValidationError("oks_ap: empty ground truth");
  if (pred.size() != gt.size() || pred.size() != bboxes.size() ||
      pred.size() != visibility.size()) {
    throw ValidationError("oks_ap inputs disagree on frame count");
  }
  std::vector<double> scores;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    bool any_visible = false;
    for (std::size_t j = 0; j < visibility[k].size(); ++j) {
      if (visibility[k][j] && masked_in(joint_mask, static_cast<Eigen::Index>(j))) {
        any_visible = true;
        break;
      }
    }
    if (!any_visible) continue;
    scores.push_back(oks(pred[k], gt[k], bboxes[k], visibility[k], kappa, joint_mask));
  }
  if (scores.empty()) throw ValidationError("oks_ap: no frames with visible joints");
  double ap = 0.0;
  const std::vector<double> thresholds = oks_thresholds();
  for (double tau : thresholds) {
    std::int64_t hits = 0;
    for (double s : scores) {
      if (s >= tau) ++hits;
    }
    ap += static_cast<double>(hits) / static_cast<double>(scores.size());
  }
  return ap / static_cast<double>(thresholds.size());
}

double spatial_alignment_error(const std::vector<Eigen::Vector3d>& effector_traj,
                               const Eigen::Vector3d& contact_point, int window_begin,
                               int window_end) {
  if (window_begin >= window_end) throw ValidationError("empty evaluation window");
  if (window_begin < 0 || window_end > static_cast<int>(effector_traj.size())) {
    throw ValidationError("evaluation window extends outside the trajectory");
  }
  double sum = 0.0;
  for (int k = window_begin; k < window_end; ++k) {
    sum += (effector_traj[static_cast<std::size_t>(k)] - contact_point).norm();
  }
  return sum / static_cast<double>(window_end - window_begin);
}

namespace {

void write_eval_body(JsonWriter& w, const EvalReport& report) {
  w.key("mpjpe_mm").value(report.mpjpe_mm);
  w.key("pck").begin_object();
  for (const auto& [threshold, fraction] : report.pck) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", threshold);
    w.key(buf).value(fraction);
  }
  w.end_object();
  w.key("ap").value(report.ap);
  w.key("per_joint_errors_mm").begin_array();
  for (double e : report.per_joint_errors_mm) w.value(e);
  w.end_array();
  w.key("frame_count").value(report.frame_count);
}

}  // namespace

std::string serialize_eval_report(const EvalReport& report, const std::string& provenance) {
  JsonWriter w;
  w.begin_object();
  write_eval_body(w, report);
  if (!provenance.empty()) w.key("provenance").value(provenance);
  w.end_object();
  return w.str() + "\n";
}

namespace {

/// Rethrows stage failures with the stage named, keeping the error type.
template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(stage) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

RoundtripReport roundtrip_eval(const KinematicModel& model, const std::vector<Camera>& rig,
                               const std::vector<JointConfiguration>& q_sequence,
                               const std::vector<RigidTransform>& root_sequence,
                               const NoiseSpec& noise, const LifterNetwork* lifter,
                               const RoundtripOptions& options) {
  if (q_sequence.empty()) throw ValidationError("roundtrip needs at least one frame");
  if (q_sequence.size() != root_sequence.size()) {
    throw ValidationError("joint and root sequences disagree on frame count");
  }
  const Camera* camera = nullptr;
  for (const Camera& c : rig) {
    if (c.id == options.camera_id) camera = &c;
  }
  if (camera == nullptr) {
    throw ValidationError("camera \"" + options.camera_id + "\" is not in the rig");
  }
  const int n = model.num_keypoints();
  if (lifter != nullptr && lifter->n != n) {
    throw ValidationError("lifter keypoint count does not match the model");
  }

  const std::vector<KeypointFrame> clean = run_stage("render", [&] {
    return render_annotations(model, {*camera}, q_sequence, root_sequence);
  });
  const std::vector<KeypointFrame> noisy =
      run_stage("noise", [&] { return add_noise(clean, noise); });

  const RigidTransform cam_inverse = camera->extrinsics.inverse();
  const Eigen::VectorXd midrange = 0.5 * (model.lower_limits() + model.upper_limits());

  RoundtripReport report;
  report.frame_count = static_cast<int>(q_sequence.size());
  report.raw.fps = options.fps;
  report.raw.joint_names = model.joint_names();

  JointConfiguration prev_q = midrange;
  RigidTransform prev_root;  // identity until the first PnP success
  bool have_pose = false;

  for (std::size_t k = 0; k < q_sequence.size(); ++k) {
    const KeypointFrame& obs = noisy[k];
    const KeypointFrame& truth = clean[k];

    Eigen::VectorXd weights = Eigen::VectorXd::Zero(n);
    int usable = 0;
    for (int i = 0; i < n; ++i) {
      if (obs.visibility[static_cast<std::size_t>(i)]) {
        weights[i] = 1.0;
        ++usable;
      }
    }
    weights[0] = 1.0;  // root target is (0,0,0) by construction

    TrajectoryFrame frame;
    frame.qpos = prev_q;
    frame.root_pos = prev_root.translation;
    frame.root_rot = prev_root.rotation;
    frame.ik_converged = false;
    frame.pnp_converged = false;

    const bool root_observed = obs.visibility[0];
    bool solved = false;
    if (usable >= 4 && (lifter == nullptr || root_observed)) {
      try {
        Eigen::MatrixX3d targets = Eigen::MatrixX3d::Zero(n, 3);
        if (lifter != nullptr) {
          Eigen::MatrixX2d filled = obs.pixel_2d;
          for (int i = 0; i < n; ++i) {
            if (!obs.visibility[static_cast<std::size_t>(i)]) filled.row(i) = filled.row(0);
          }
          const NormalizedKeypoints normalized = normalize_2d(filled, 0);
          targets = lifter_forward(*lifter, flatten_2d(normalized.coords));
        } else {
          const RigidTransform root_inverse = root_sequence[k].inverse();
          for (int i = 0; i < n; ++i) {
            if (!obs.visibility[static_cast<std::size_t>(i)]) continue;
            const Eigen::Vector3d cam_pt =
                backproject(camera->intrinsics, obs.pixel_2d.row(i), truth.camera_3d(i, 2));
            targets.row(i) = root_inverse.apply(cam_inverse.apply(cam_pt));
          }
        }
        targets = center_targets(targets, 0);

        IkProblem ik_problem;
        ik_problem.targets = targets;
        ik_problem.weights = weights;
        ik_problem.q_init = prev_q;
        const IkSolution ik = solve_ik(model, ik_problem, options.ik);

        PnpProblem pnp_problem;
        pnp_problem.local_points = forward_kinematics(model, ik.q_star);
        pnp_problem.pixels = obs.pixel_2d;
        pnp_problem.weights = weights;
        pnp_problem.intrinsics = camera->intrinsics;
        if (have_pose) pnp_problem.pose_init = camera->extrinsics.compose(prev_root);
        const PnpSolution pnp = solve_pnp(pnp_problem, options.pnp);

        const RigidTransform root_world = cam_inverse.compose(pnp.cam_from_local);
        frame.qpos = ik.q_star;
        frame.root_pos = root_world.translation;
        frame.root_rot = root_world.rotation.normalized();
        frame.ik_converged = ik.converged;
        frame.pnp_converged = pnp.converged;
        prev_q = ik.q_star;
        prev_root = root_world;
        have_pose = true;
        solved = true;
      } catch (const ValidationError&) {
        solved = false;
      } catch (const NumericError&) {
        solved = false;
      }
    }
    if (!solved) ++report.failed_count;
    if (frame.ik_converged) ++report.ik_converged_count;
    if (frame.pnp_converged) ++report.pnp_converged_count;
    report.raw.frames.push_back(std::move(frame));
  }

  report.processed = run_stage("smoothing", [&] {
    return to_egocentric(ema_smooth(report.raw, options.ema_alpha));
  });

  // Against-ground-truth comparisons on the raw per-frame estimates.
  double joint_sq = 0.0, pos_sq = 0.0, rot_sq = 0.0;
  std::vector<Eigen::MatrixX3d> pred_world, gt_world;
  std::vector<Eigen::MatrixX2d> pred_px, gt_px;
  std::vector<Eigen::Vector4d> gt_bbox;
  std::vector<std::vector<bool>> gt_vis;
  for (std::size_t k = 0; k < q_sequence.size(); ++k) {
    const TrajectoryFrame& frame = report.raw.frames[k];
    joint_sq += (frame.qpos - q_sequence[k]).squaredNorm();
    pos_sq += (frame.root_pos - root_sequence[k].translation).squaredNorm();
    const double angle = quat_geodesic_angle(frame.root_rot, root_sequence[k].rotation);
    rot_sq += angle * angle;

    RigidTransform root_rec;
    root_rec.rotation = frame.root_rot;
    root_rec.translation = frame.root_pos;
    const Eigen::MatrixX3d world_rec =
        transform_points(root_rec, forward_kinematics(model, frame.qpos));
    pred_world.push_back(world_rec);
    gt_world.push_back(clean[k].world_3d);

    if (!clean[k].degenerate) {
      Eigen::MatrixX2d px(n, 2);
      for (int i = 0; i < n; ++i) {
        px.row(i) = project_point(*camera, world_rec.row(i).transpose()).pixel;
      }
      pred_px.push_back(px);
      gt_px.push_back(clean[k].pixel_2d);
      gt_bbox.push_back(clean[k].bbox);
      gt_vis.push_back(clean[k].visibility);
    }
  }
  const double frames = static_cast<double>(q_sequence.size());
  const double dof = static_cast<double>(model.dof());
  report.joint_rms_rad = std::sqrt(joint_sq / (frames * dof));
  report.root_pos_rms_m = std::sqrt(pos_sq / frames);
  report.root_rot_rms_rad = std::sqrt(rot_sq / frames);

  report.eval.mpjpe_mm = mpjpe_mm(pred_world, gt_world, Alignment::kNone);
  report.refk_mpjpe_mm = report.eval.mpjpe_mm;
  report.eval.per_joint_errors_mm = per_joint_error_mm(pred_world, gt_world, Alignment::kNone);
  report.eval.frame_count = report.frame_count;
  if (!pred_px.empty()) {
    for (double threshold : {0.05, 0.10, 0.20}) {
      report.eval.pck.emplace_back(threshold, pck(pred_px, gt_px, gt_bbox, gt_vis, threshold));
    }
    report.eval.ap = oks_ap(pred_px, gt_px, gt_bbox, gt_vis);
  }
  return report;
}

std::string serialize_roundtrip_report(const RoundtripReport& report,
                                       const std::string& provenance) {
  JsonWriter w;
  w.begin_object();
  w.key("joint_rms_rad").value(report.joint_rms_rad);
  w.key("root_pos_rms_m").value(report.root_pos_rms_m);
  w.key("root_rot_rms_rad").value(report.root_rot_rms_rad);
  w.key("refk_mpjpe_mm").value(report.refk_mpjpe_mm);
  w.key("frame_count").value(report.frame_count);
  w.key("ik_converged_count").value(report.ik_converged_count);
  w.key("pnp_converged_count").value(report.pnp_converged_count);
  w.key("failed_count").value(report.failed_count);
  w.key("eval");
  w.begin_object();
  write_eval_body(w, report.eval);
  w.end_object();
  if (!provenance.empty()) w.key("provenance").value(provenance);
  w.end_object();
  return w.str() + "\n";
}

}  // namespace kinerec
