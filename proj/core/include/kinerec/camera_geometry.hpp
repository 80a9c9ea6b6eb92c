#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinerec/geometry.hpp"

namespace kinerec {

struct PinholeIntrinsics {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double z_near = 0.01;
};

/// Camera with vision-convention extrinsics: world -> camera, +Z forward,
/// +Y down, +X right.
struct Camera {
  std::string id;
  PinholeIntrinsics intrinsics;
  RigidTransform extrinsics;
};

struct ProjectionResult {
  Eigen::Vector2d pixel{0.0, 0.0};
  double depth = 0.0;  ///< camera-frame z
  bool visible = false;
};

enum class FrameConvention { kZUpToVision };

/// Change of basis from a graphics-style camera frame (-Z forward, +Y up) to
/// the vision frame (+Z forward, +Y down): diag(1, -1, -1), determinant +1.
Eigen::Matrix3d sim_to_vision_matrix();

/// Applies the named orthogonal basis change to each point (row).
Eigen::Vector3d sim_to_vision(const Eigen::Vector3d& point, FrameConvention convention);
Eigen::MatrixX3d sim_to_vision(const Eigen::MatrixX3d& points, FrameConvention convention);

/// Vision-convention world->camera extrinsics for a camera at `eye` looking at
/// `target`, built from a graphics look-at frame (world up = +Z) followed by
/// sim_to_vision. When the view direction is within 1e-9 of vertical the up
/// hint falls back to +X.
RigidTransform look_at_extrinsics(const Eigen::Vector3d& eye, const Eigen::Vector3d& target);

Eigen::Vector2d project_camera_point(const PinholeIntrinsics& k, const Eigen::Vector3d& cam_pt);

/// Camera-frame point for pixel (u, v) at the given depth (camera z).
Eigen::Vector3d backproject(const PinholeIntrinsics& k, const Eigen::Vector2d& pixel,
                            double depth);

/// Projects a world point. visible = in front of the near plane and inside
/// [0, width] x [0, height]; a point behind the near plane projects to (0, 0).
ProjectionResult project_point(const Camera& camera, const Eigen::Vector3d& world_pt);

struct RigConfig {
  double radius = 3.0;
  double side_height = 1.0;
  Eigen::Vector3d look_at{0.0, 0.0, 1.0};
  PinholeIntrinsics intrinsics;
};

/// Nine-camera hemispherical rig around `look_at`: four side cameras at
/// azimuths {0, 90, 180, 270} deg and height side_height with level optical
/// axes through look_at's horizontal position, four cameras on the
/// 45-deg-elevation ring at azimuths {45, 135, 225, 315} deg pointing at
/// look_at, and one camera radius above look_at pointing straight down. Ids:
/// side_0, side_90, side_180, side_270, diag_45, diag_135, diag_225, diag_315,
/// top.
std::vector<Camera> build_hemispherical_rig(const RigConfig& config);

std::string serialize_rig(const std::vector<Camera>& cameras);
std::vector<Camera> parse_rig(const std::string& json_text);
std::vector<Camera> load_rig(const std::string& path);

}  // namespace kinerec
