#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinerec/camera_geometry.hpp"
#include "kinerec/kinematic_model.hpp"

namespace kinerec {

/// One dataset record: a single (frame, camera) view of the robot with full
/// ground truth. pixel_2d row k reprojects camera_3d row k exactly on clean
/// (noise-free) records.
struct KeypointFrame {
  std::int64_t frame_id = 0;
  std::string camera_id;
  JointConfiguration q;
  RigidTransform root_pose_world;
  Eigen::MatrixX3d world_3d;   ///< N x 3 keypoints, world frame
  Eigen::MatrixX3d camera_3d;  ///< N x 3 keypoints, camera frame
  Eigen::MatrixX2d pixel_2d;   ///< N x 2 pixel coordinates
  std::vector<bool> visibility;
  Eigen::Vector4d bbox{0.0, 0.0, 0.0, 0.0};  ///< (min_x, min_y, max_x, max_y), 5% margin per side
  bool degenerate = true;                    ///< fewer than 4 visible keypoints
};

struct TrajectoryConfig {
  int frames = 100;
  double fps = 30.0;
  std::uint64_t seed = 0;
  double amp_min = 0.2;   ///< amplitude as a fraction of joint half-range
  double amp_max = 0.9;
  double freq_min = 0.1;  ///< Hz
  double freq_max = 0.6;
};

/// Per-joint sinusoids centered on the limit midpoint with amplitude at most
/// amp_max of the half-range: the trajectory respects the limits by
/// construction.
std::vector<JointConfiguration> sample_joint_trajectory(const KinematicModel& model,
                                                        const TrajectoryConfig& config);

/// Slow root drift around the origin with bounded velocity and yaw rate; the
/// root z stays inside [base_height - 0.1, base_height + 0.1] (default band
/// 0.6..0.8 m).
std::vector<RigidTransform> sample_root_walk(int frames, double fps, std::uint64_t seed,
                                             double base_height = 0.7);

/// Renders one trajectory against every camera. Records are ordered frame-major
/// (all cameras of frame f, then frame f+1) with frame ids starting at
/// start_frame_id.
std::vector<KeypointFrame> render_annotations(const KinematicModel& model,
                                              const std::vector<Camera>& cameras,
                                              const std::vector<JointConfiguration>& qs,
                                              const std::vector<RigidTransform>& root_poses,
                                              std::int64_t start_frame_id = 0);

struct NoiseSpec {
  double pixel_sigma = 0.0;    ///< isotropic Gaussian, pixels
  double outlier_rate = 0.0;   ///< per-keypoint probability of a gross offset
  double outlier_radius = 50.0;  ///< max outlier offset magnitude, pixels
  double dropout_rate = 0.0;   ///< per-keypoint probability of losing visibility
  std::uint64_t seed = 0;
};

/// Detector-noise simulation on pixel_2d / visibility only; 3D ground truth is
/// untouched. Each record gets an independent stream derived from
/// (seed, frame_id, camera_id), and exactly six uniform draws are consumed per
/// keypoint regardless of which corruptions fire, so records and keypoints
/// stay aligned across noise settings. bbox and the degenerate flag are
/// recomputed from the surviving visible keypoints.
std::vector<KeypointFrame> add_noise(const std::vector<KeypointFrame>& records,
                                     const NoiseSpec& spec);

/// Greedy farthest-point selection in joint-angle space (Euclidean metric):
/// starts from frame 0, repeatedly adds the frame farthest from the selected
/// set (smallest index on ties). Returns k ascending frame indices.
std::vector<int> distill_keyframes(const std::vector<JointConfiguration>& q_sequence, int k);

std::string serialize_record(const KeypointFrame& record);
KeypointFrame parse_record(const std::string& json_line);

/// JSONL, one record per line, in input order.
void write_dataset(const std::vector<KeypointFrame>& records, const std::string& path);

/// Reads and validates a JSONL dataset; errors cite the 1-based line number.
/// An empty file is a valid empty dataset.
std::vector<KeypointFrame> read_dataset(const std::string& path);

}  // namespace kinerec
