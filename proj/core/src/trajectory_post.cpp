#include "kinerec/trajectory_post.hpp"

#include <cmath>
#include <cstddef>

#include <nlohmann/json.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/serialization.hpp"

namespace kinerec {
namespace {

constexpr double kUnitNormPass = 1e-9;
constexpr double kUnitNormRenormalize = 1e-6;

bool frame_failed(const TrajectoryFrame& frame) {
  return !frame.ik_converged || !frame.pnp_converged;
}

}  // namespace

void validate_trajectory(const RecoveredTrajectory& trajectory) {
  if (!(trajectory.fps > 0.0) || !std::isfinite(trajectory.fps)) {
    throw ValidationError("trajectory fps must be positive and finite");
  }
  if (trajectory.frames.empty()) throw ValidationError("trajectory has no frames");
  const Eigen::Index dof = static_cast<Eigen::Index>(trajectory.joint_names.size());
  for (std::size_t k = 0; k < trajectory.frames.size(); ++k) {
    const TrajectoryFrame& frame = trajectory.frames[k];
    const std::string where = "frame " + std::to_string(k);
    if (frame.qpos.size() != dof) {
      throw ValidationError(where + ": qpos has " + std::to_string(frame.qpos.size()) +
                            " entries, expected " + std::to_string(dof));
    }
    if (!frame.root_pos.allFinite() || !frame.qpos.allFinite() ||
        !frame.root_rot.coeffs().allFinite()) {
      throw ValidationError(where + ": non-finite value");
    }
    if (std::abs(frame.root_rot.norm() - 1.0) > kUnitNormPass) {
      throw ValidationError(where + ": root_rot is not a unit quaternion");
    }
  }
}

void validate_trajectory(const RecoveredTrajectory& trajectory, const KinematicModel& model) {
  validate_trajectory(trajectory);
  if (static_cast<int>(trajectory.joint_names.size()) != model.dof()) {
    throw ValidationError("trajectory joint count does not match the model");
  }
  const Eigen::VectorXd lower = model.lower_limits();
  const Eigen::VectorXd upper = model.upper_limits();
  for (std::size_t k = 0; k < trajectory.frames.size(); ++k) {
    const Eigen::VectorXd& q = trajectory.frames[k].qpos;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      if (q[j] < lower[j] || q[j] > upper[j]) {
        throw ValidationError("frame " + std::to_string(k) + ": joint " +
                              trajectory.joint_names[static_cast<std::size_t>(j)] +
                              " outside its limits");
      }
    }
  }
}

RecoveredTrajectory ema_smooth(const RecoveredTrajectory& trajectory, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) throw ValidationError("alpha must lie in (0, 1]");
  validate_trajectory(trajectory);
  RecoveredTrajectory out = trajectory;
  Eigen::Vector3d pos_state = out.frames.front().root_pos;
  Eigen::VectorXd qpos_state = out.frames.front().qpos;
  Eigen::Quaterniond rot_state = out.frames.front().root_rot;
  for (std::size_t k = 1; k < out.frames.size(); ++k) {
    TrajectoryFrame& frame = out.frames[k];
    pos_state = alpha * frame.root_pos + (1.0 - alpha) * pos_state;
    qpos_state = alpha * frame.qpos + (1.0 - alpha) * qpos_state;
    rot_state = nlerp(rot_state, frame.root_rot, alpha);
    frame.root_pos = pos_state;
    frame.qpos = qpos_state;
    frame.root_rot = rot_state;
  }
  return out;
}

RecoveredTrajectory to_egocentric(const RecoveredTrajectory& trajectory) {
  validate_trajectory(trajectory);
  RecoveredTrajectory out = trajectory;
  const TrajectoryFrame& first = trajectory.frames.front();

  double yaw = 0.0;
  const bool heading_defined = extract_yaw(first.root_rot, yaw);
  out.heading_fallback = !heading_defined;

  RigidTransform base;
  base.rotation = heading_defined ? yaw_rotation(yaw) : Eigen::Quaterniond(1.0, 0.0, 0.0, 0.0);
  base.translation = Eigen::Vector3d(first.root_pos.x(), first.root_pos.y(), 0.0);
  const RigidTransform base_inv = base.inverse();

  for (TrajectoryFrame& frame : out.frames) {
    frame.root_pos = base_inv.apply(frame.root_pos);
    frame.root_rot = (base_inv.rotation * frame.root_rot).normalized();
  }
  return out;
}

std::vector<RecoveredTrajectory> interpolate_gaps(const RecoveredTrajectory& trajectory,
                                                  int max_gap) {
  if (max_gap < 0) throw ValidationError("max_gap must be nonnegative");
  validate_trajectory(trajectory);
  const std::vector<TrajectoryFrame>& frames = trajectory.frames;
  const std::size_t n = frames.size();

  std::vector<std::size_t> good;
  for (std::size_t k = 0; k < n; ++k) {
    if (!frame_failed(frames[k])) good.push_back(k);
  }
  if (good.empty()) return {};

  RecoveredTrajectory shell = trajectory;
  shell.frames.clear();

  std::vector<RecoveredTrajectory> segments;
  RecoveredTrajectory current = shell;
  current.frames.push_back(frames[good.front()]);

  for (std::size_t gi = 1; gi < good.size(); ++gi) {
    const std::size_t prev = good[gi - 1];
    const std::size_t next = good[gi];
    const std::size_t run = next - prev - 1;
    if (run == 0) {
      current.frames.push_back(frames[next]);
      continue;
    }
    if (run <= static_cast<std::size_t>(max_gap)) {
      const TrajectoryFrame& a = frames[prev];
      const TrajectoryFrame& b = frames[next];
      for (std::size_t i = 1; i <= run; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(run + 1);
        TrajectoryFrame filled = frames[prev + i];  // keeps the original failure flags
        filled.root_pos = (1.0 - t) * a.root_pos + t * b.root_pos;
        filled.qpos = (1.0 - t) * a.qpos + t * b.qpos;
        filled.root_rot = quat_slerp(a.root_rot, b.root_rot, t);
        current.frames.push_back(filled);
      }
      current.frames.push_back(frames[next]);
    } else {
      segments.push_back(std::move(current));
      current = shell;
      current.frames.push_back(frames[next]);
    }
  }
  segments.push_back(std::move(current));
  return segments;
}

std::string serialize_gmr(const RecoveredTrajectory& trajectory, const std::string& provenance) {
  validate_trajectory(trajectory);
  JsonWriter w;
  w.begin_object();
  w.key("format").value("gmr-motion/1");
  w.key("fps").value(trajectory.fps);
  w.key("joint_names").begin_array();
  for (const std::string& name : trajectory.joint_names) w.value(name);
  w.end_array();
  w.key("frames").begin_array();
  for (const TrajectoryFrame& frame : trajectory.frames) {
    w.begin_object();
    w.key("root_pos").value(frame.root_pos);
    w.key("root_rot").begin_array();
    w.value(frame.root_rot.w()).value(frame.root_rot.x());
    w.value(frame.root_rot.y()).value(frame.root_rot.z());
    w.end_array();
    w.key("qpos").value(frame.qpos);
    w.end_object();
  }
  w.end_array();
  if (!provenance.empty()) w.key("provenance").value(provenance);
  w.end_object();
  return w.str() + "\n";
}

void export_gmr(const RecoveredTrajectory& trajectory, const std::string& path,
                const std::string& provenance) {
  write_text_file(path, serialize_gmr(trajectory, provenance));
}

RecoveredTrajectory parse_gmr(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed motion JSON: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw ValidationError("motion document must be a JSON object");
    const std::string format = doc.at("format").get<std::string>();
    if (format != "gmr-motion/1") {
      throw ValidationError("unsupported format tag \"" + format +
                            "\" (expected \"gmr-motion/1\")");
    }
    RecoveredTrajectory traj;
    traj.fps = doc.at("fps").get<double>();
    for (const auto& name : doc.at("joint_names")) {
      traj.joint_names.push_back(name.get<std::string>());
    }
    const auto& frames = doc.at("frames");
    if (!frames.is_array() || frames.empty()) {
      throw ValidationError("motion document has no frames");
    }
    const std::size_t dof = traj.joint_names.size();
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const std::string where = "frame " + std::to_string(k);
      const auto& f = frames[k];
      TrajectoryFrame frame;
      const auto& pos = f.at("root_pos");
      if (pos.size() != 3) throw ValidationError(where + ": root_pos must have 3 elements");
      for (int i = 0; i < 3; ++i) frame.root_pos[i] = pos[i].get<double>();
      const auto& rot = f.at("root_rot");
      if (rot.size() != 4) throw ValidationError(where + ": root_rot must have 4 elements");
      frame.root_rot = Eigen::Quaterniond(rot[0].get<double>(), rot[1].get<double>(),
                                          rot[2].get<double>(), rot[3].get<double>());
      const auto& qpos = f.at("qpos");
      if (qpos.size() != dof) {
        throw ValidationError(where + ": qpos has " + std::to_string(qpos.size()) +
                              " entries, expected " + std::to_string(dof));
      }
      frame.qpos.resize(static_cast<Eigen::Index>(dof));
      for (std::size_t j = 0; j < dof; ++j) {
        frame.qpos[static_cast<Eigen::Index>(j)] = qpos[j].get<double>();
      }
      if (!frame.root_pos.allFinite() || !frame.qpos.allFinite() ||
          !frame.root_rot.coeffs().allFinite()) {
        throw ValidationError(where + ": non-finite value");
      }
      const double deviation = std::abs(frame.root_rot.norm() - 1.0);
      if (deviation > kUnitNormRenormalize) {
        throw ValidationError(where + ": quaternion norm deviates from 1 by " +
                              format_double(deviation) + ", beyond the 1e-6 import tolerance");
      }
      if (deviation > kUnitNormPass) frame.root_rot.normalize();
      traj.frames.push_back(std::move(frame));
    }
    validate_trajectory(traj);
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid motion JSON: ") + e.what());
  }
}

RecoveredTrajectory import_gmr(const std::string& path) {
  return parse_gmr(read_text_file(path));
}

}  // namespace kinerec
