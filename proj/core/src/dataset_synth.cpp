#include "kinerec/dataset_synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/rng.hpp"
#include "kinerec/serialization.hpp"

namespace kinerec {
namespace {

std::uint64_t record_stream(std::uint64_t seed, std::int64_t frame_id,
                            const std::string& camera_id) {
  std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(frame_id));
  return splitmix64(h ^ fnv1a64(camera_id));
}

/// Tight bbox over visible keypoints expanded by 5% of each dimension per
/// side; zero bbox when nothing is visible. Also refreshes `degenerate`.
void finalize_bbox(KeypointFrame& record) {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();
  int visible = 0;
  for (Eigen::Index k = 0; k < record.pixel_2d.rows(); ++k) {
    if (!record.visibility[static_cast<std::size_t>(k)]) continue;
    ++visible;
    min_x = std::min(min_x, record.pixel_2d(k, 0));
    max_x = std::max(max_x, record.pixel_2d(k, 0));
    min_y = std::min(min_y, record.pixel_2d(k, 1));
    max_y = std::max(max_y, record.pixel_2d(k, 1));
  }
  record.degenerate = visible < 4;
  if (visible == 0) {
    record.bbox.setZero();
    return;
  }
  const double margin_x = 0.05 * (max_x - min_x);
  const double margin_y = 0.05 * (max_y - min_y);
  record.bbox << min_x - margin_x, min_y - margin_y, max_x + margin_x, max_y + margin_y;
}

Eigen::MatrixX3d json_to_points3(const nlohmann::json& arr, const char* what) {
  Eigen::MatrixX3d out(arr.size(), 3);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (arr[i].size() != 3) throw ValidationError(std::string(what) + " row must have 3 values");
    for (int j = 0; j < 3; ++j) out(static_cast<Eigen::Index>(i), j) = arr[i][j].get<double>();
  }
  return out;
}

}  // namespace

std::vector<JointConfiguration> sample_joint_trajectory(const KinematicModel& model,
                                                        const TrajectoryConfig& config) {
  if (config.frames <= 0) throw ValidationError("trajectory must have at least one frame");
  if (config.fps <= 0.0) throw ValidationError("fps must be positive");
  DeterministicRng rng(splitmix64(config.seed ^ 0x6b796e5472616a65ull));
  const Eigen::VectorXd lower = model.lower_limits();
  const Eigen::VectorXd upper = model.upper_limits();
  const int dof = model.dof();

  Eigen::VectorXd amp(dof), freq(dof), phase(dof);
  for (int d = 0; d < dof; ++d) {
    amp[d] = 0.5 * (upper[d] - lower[d]) * rng.uniform(config.amp_min, config.amp_max);
    freq[d] = rng.uniform(config.freq_min, config.freq_max);
    phase[d] = rng.uniform(0.0, 2.0 * M_PI);
  }

  std::vector<JointConfiguration> qs(config.frames, JointConfiguration(dof));
  for (int f = 0; f < config.frames; ++f) {
    const double t = f / config.fps;
    for (int d = 0; d < dof; ++d) {
      const double mid = 0.5 * (lower[d] + upper[d]);
      qs[f][d] = mid + amp[d] * std::sin(2.0 * M_PI * freq[d] * t + phase[d]);
    }
  }
  return qs;
}

std::vector<RigidTransform> sample_root_walk(int frames, double fps, std::uint64_t seed,
                                             double base_height) {
  if (frames <= 0) throw ValidationError("trajectory must have at least one frame");
  if (fps <= 0.0) throw ValidationError("fps must be positive");
  DeterministicRng rng(splitmix64(seed ^ 0x726f6f7457616c6bull));
  // Slow sinusoidal drift: x, y, z, and yaw each get a frequency and phase.
  double f[4], p[4];
  for (int i = 0; i < 4; ++i) {
    f[i] = rng.uniform(0.05, 0.25);
    p[i] = rng.uniform(0.0, 2.0 * M_PI);
  }
  std::vector<RigidTransform> poses(frames);
  for (int k = 0; k < frames; ++k) {
    const double t = k / fps;
    RigidTransform pose;
    pose.translation = {0.25 * std::sin(2.0 * M_PI * f[0] * t + p[0]),
                        0.25 * std::sin(2.0 * M_PI * f[1] * t + p[1]),
                        base_height + 0.1 * std::sin(2.0 * M_PI * f[2] * t + p[2])};
    pose.rotation = yaw_rotation(0.5 * std::sin(2.0 * M_PI * f[3] * t + p[3]));
    poses[k] = pose;
  }
  return poses;
}

std::vector<KeypointFrame> render_annotations(const KinematicModel& model,
                                              const std::vector<Camera>& cameras,
                                              const std::vector<JointConfiguration>& qs,
                                              const std::vector<RigidTransform>& root_poses,
                                              std::int64_t start_frame_id) {
  if (qs.size() != root_poses.size()) {
    throw ValidationError("joint trajectory and root trajectory must have the same length");
  }
  if (cameras.empty()) throw ValidationError("no cameras to render with");
  const int n = model.num_keypoints();
  std::vector<KeypointFrame> records;
  records.reserve(qs.size() * cameras.size());
  for (std::size_t frame = 0; frame < qs.size(); ++frame) {
    const Eigen::MatrixX3d world = forward_kinematics(model, qs[frame], root_poses[frame]);
    for (const Camera& camera : cameras) {
      KeypointFrame record;
      record.frame_id = start_frame_id + static_cast<std::int64_t>(frame);
      record.camera_id = camera.id;
      record.q = qs[frame];
      record.root_pose_world = root_poses[frame];
      record.world_3d = world;
      record.camera_3d.resize(n, 3);
      record.pixel_2d.resize(n, 2);
      record.visibility.assign(n, false);
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d cam_pt = camera.extrinsics.apply(world.row(k).transpose());
        record.camera_3d.row(k) = cam_pt.transpose();
        const ProjectionResult proj = project_point(camera, world.row(k).transpose());
        record.pixel_2d.row(k) = proj.pixel.transpose();
        record.visibility[k] = proj.visible;
      }
      finalize_bbox(record);
      records.push_back(std::move(record));
    }
  }
  return records;
}

std::vector<KeypointFrame> add_noise(const std::vector<KeypointFrame>& records,
                                     const NoiseSpec& spec) {
  if (spec.pixel_sigma < 0.0 || spec.outlier_rate < 0.0 || spec.outlier_rate > 1.0 ||
      spec.outlier_radius < 0.0 || spec.dropout_rate < 0.0 || spec.dropout_rate > 1.0) {
    throw ValidationError("invalid noise specification");
  }
  std::vector<KeypointFrame> out = records;
  for (KeypointFrame& record : out) {
    DeterministicRng rng(record_stream(spec.seed, record.frame_id, record.camera_id));
    for (Eigen::Index k = 0; k < record.pixel_2d.rows(); ++k) {
      // Fixed draw budget per keypoint: 6 uniforms (2 gaussian, outlier
      // decision, outlier angle, outlier radius, dropout decision).
      double g1, g2;
      rng.normal_pair(g1, g2);
      const double u_outlier = rng.uniform();
      const double u_angle = rng.uniform();
      const double u_radius = rng.uniform();
      const double u_dropout = rng.uniform();

      record.pixel_2d(k, 0) += spec.pixel_sigma * g1;
      record.pixel_2d(k, 1) += spec.pixel_sigma * g2;
      if (u_outlier < spec.outlier_rate) {
        const double angle = 2.0 * M_PI * u_angle;
        const double radius = spec.outlier_radius * std::sqrt(u_radius);
        record.pixel_2d(k, 0) += radius * std::cos(angle);
        record.pixel_2d(k, 1) += radius * std::sin(angle);
      }
      if (u_dropout < spec.dropout_rate) {
        record.visibility[static_cast<std::size_t>(k)] = false;
      }
    }
    finalize_bbox(record);
  }
  return out;
}

std::vector<int> distill_keyframes(const std::vector<JointConfiguration>& q_sequence, int k) {
  const int n = static_cast<int>(q_sequence.size());
  if (n == 0) throw ValidationError("cannot distill an empty sequence");
  if (k <= 0) throw ValidationError("keyframe count must be positive");
  if (k > n) {
    throw ValidationError("keyframe count " + std::to_string(k) + " exceeds frame count " +
                          std::to_string(n));
  }
  for (int i = 1; i < n; ++i) {
    if (q_sequence[i].size() != q_sequence[0].size()) {
      throw ValidationError("frame " + std::to_string(i) + " has inconsistent joint count");
    }
  }
  std::vector<int> selected;
  selected.reserve(k);
  std::vector<bool> taken(n, false);
  selected.push_back(0);
  taken[0] = true;
  // min_dist[i] = distance from frame i to the nearest selected frame; each
  // new selection refreshes it in one pass, so the whole run is O(n * k).
  Eigen::VectorXd min_dist(n);
  for (int i = 0; i < n; ++i) min_dist[i] = (q_sequence[i] - q_sequence[0]).norm();
  for (int round = 1; round < k; ++round) {
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      if (!taken[i] && min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    selected.push_back(best);
    taken[best] = true;
    for (int i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], (q_sequence[i] - q_sequence[best]).norm());
    }
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::string serialize_record(const KeypointFrame& record) {
  JsonWriter w;
  w.begin_object();
  w.key("frame_id").value(static_cast<std::int64_t>(record.frame_id));
  w.key("camera_id").value(record.camera_id);
  w.key("q").value(record.q);
  w.key("root_pose_world").begin_object();
  w.key("position").value(record.root_pose_world.translation);
  const Eigen::Quaterniond& rq = record.root_pose_world.rotation;
  w.key("rotation").begin_array().value(rq.w()).value(rq.x()).value(rq.y()).value(rq.z());
  w.end_array().end_object();
  auto points = [&w](const Eigen::MatrixX3d& m) {
    w.begin_array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      w.begin_array().value(m(i, 0)).value(m(i, 1)).value(m(i, 2)).end_array();
    }
    w.end_array();
  };
  // 3D ground truth is optional (2D-only detection streams); absent fields are
  // omitted so that 2D-only records round-trip byte-for-byte.
  if (record.world_3d.rows() > 0) {
    w.key("world_3d");
    points(record.world_3d);
  }
  if (record.camera_3d.rows() > 0) {
    w.key("camera_3d");
    points(record.camera_3d);
  }
  w.key("pixel_2d").begin_array();
  for (Eigen::Index i = 0; i < record.pixel_2d.rows(); ++i) {
    w.begin_array().value(record.pixel_2d(i, 0)).value(record.pixel_2d(i, 1)).end_array();
  }
  w.end_array();
  w.key("visibility").begin_array();
  for (bool v : record.visibility) w.value(v);
  w.end_array();
  w.key("bbox").begin_array();
  for (int i = 0; i < 4; ++i) w.value(record.bbox[i]);
  w.end_array();
  w.key("degenerate").value(record.degenerate);
  w.end_object();
  return w.str();
}

KeypointFrame parse_record(const std::string& json_line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed record JSON: ") + e.what());
  }
  try {
    KeypointFrame record;
    record.frame_id = doc.at("frame_id").get<std::int64_t>();
    record.camera_id = doc.at("camera_id").get<std::string>();
    const auto& q = doc.at("q");
    record.q.resize(static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) {
      record.q[static_cast<Eigen::Index>(i)] = q[i].get<double>();
    }
    const auto& pose = doc.at("root_pose_world");
    const auto& pos = pose.at("position");
    const auto& rot = pose.at("rotation");
    if (pos.size() != 3) throw ValidationError("root position must have 3 values");
    if (rot.size() != 4) throw ValidationError("root rotation must have 4 values (w,x,y,z)");
    record.root_pose_world.translation =
        Eigen::Vector3d(pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>());
    record.root_pose_world.rotation =
        Eigen::Quaterniond(rot[0].get<double>(), rot[1].get<double>(), rot[2].get<double>(),
                           rot[3].get<double>());
    if (std::abs(record.root_pose_world.rotation.norm() - 1.0) > 1e-6) {
      throw ValidationError("root rotation is not a unit quaternion");
    }
    record.world_3d = doc.contains("world_3d") ? json_to_points3(doc.at("world_3d"), "world_3d")
                                               : Eigen::MatrixX3d(0, 3);
    record.camera_3d = doc.contains("camera_3d")
                           ? json_to_points3(doc.at("camera_3d"), "camera_3d")
                           : Eigen::MatrixX3d(0, 3);
    const auto& px = doc.at("pixel_2d");
    record.pixel_2d.resize(static_cast<Eigen::Index>(px.size()), 2);
    for (std::size_t i = 0; i < px.size(); ++i) {
      if (px[i].size() != 2) throw ValidationError("pixel_2d row must have 2 values");
      record.pixel_2d(static_cast<Eigen::Index>(i), 0) = px[i][0].get<double>();
      record.pixel_2d(static_cast<Eigen::Index>(i), 1) = px[i][1].get<double>();
    }
    for (const auto& v : doc.at("visibility")) record.visibility.push_back(v.get<bool>());
    const auto& bbox = doc.at("bbox");
    if (bbox.size() != 4) throw ValidationError("bbox must have 4 values");
    for (int i = 0; i < 4; ++i) record.bbox[i] = bbox[i].get<double>();
    record.degenerate = doc.at("degenerate").get<bool>();

    const Eigen::Index n = record.pixel_2d.rows();
    if (n < 2) throw ValidationError("record must have at least 2 keypoints");
    if ((record.world_3d.rows() != n && record.world_3d.rows() != 0) ||
        (record.camera_3d.rows() != n && record.camera_3d.rows() != 0) ||
        static_cast<Eigen::Index>(record.visibility.size()) != n) {
      throw ValidationError("keypoint arrays disagree on the keypoint count");
    }
    if (!record.world_3d.allFinite() || !record.camera_3d.allFinite() ||
        !record.pixel_2d.allFinite() || !record.q.allFinite()) {
      throw ValidationError("record contains non-finite values");
    }
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid record: ") + e.what());
  }
}

void write_dataset(const std::vector<KeypointFrame>& records, const std::string& path) {
  std::string out;
  for (const KeypointFrame& record : records) {
    out += serialize_record(record);
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<KeypointFrame> read_dataset(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::vector<KeypointFrame> records;
  records.reserve(lines.size());
  Eigen::Index n = -1;
  Eigen::Index dof = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      records.push_back(parse_record(lines[i]));
    } catch (const ValidationError& e) {
      throw ValidationError(path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    const KeypointFrame& record = records.back();
    if (n == -1) {
      n = record.pixel_2d.rows();
      dof = record.q.size();
    } else if (record.pixel_2d.rows() != n || record.q.size() != dof) {
      throw ValidationError(path + " line " + std::to_string(i + 1) +
                            ": keypoint or joint count differs from earlier records");
    }
  }
  return records;
}

}  // namespace kinerec
