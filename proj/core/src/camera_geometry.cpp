#include "kinerec/camera_geometry.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/serialization.hpp"

namespace kinerec {

Eigen::Matrix3d sim_to_vision_matrix() {
  Eigen::Matrix3d c = Eigen::Matrix3d::Identity();
  c(1, 1) = -1.0;
  c(2, 2) = -1.0;
  return c;
}

Eigen::Vector3d sim_to_vision(const Eigen::Vector3d& point, FrameConvention convention) {
  if (convention != FrameConvention::kZUpToVision) {
    throw ValidationError("unknown frame-convention tag");
  }
  return sim_to_vision_matrix() * point;
}

Eigen::MatrixX3d sim_to_vision(const Eigen::MatrixX3d& points, FrameConvention convention) {
  if (convention != FrameConvention::kZUpToVision) {
    throw ValidationError("unknown frame-convention tag");
  }
  return points * sim_to_vision_matrix().transpose();
}

RigidTransform look_at_extrinsics(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d offset = target - eye;
  const double dist = offset.norm();
  if (dist < 1e-12) throw ValidationError("look-at target coincides with the camera position");
  const Eigen::Vector3d forward = offset / dist;

  Eigen::Vector3d up_hint = Eigen::Vector3d::UnitZ();
  if (forward.cross(up_hint).norm() < 1e-9) up_hint = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d right = forward.cross(up_hint).normalized();
  const Eigen::Vector3d up = right.cross(forward);

  Eigen::Matrix3d r_gl;
  r_gl.row(0) = right.transpose();
  r_gl.row(1) = up.transpose();
  r_gl.row(2) = (-forward).transpose();

  RigidTransform t;
  const Eigen::Matrix3d r_cv = sim_to_vision_matrix() * r_gl;
  t.rotation = Eigen::Quaterniond(r_cv);
  t.rotation.normalize();
  t.translation = -(r_cv * eye);
  return t;
}

Eigen::Vector2d project_camera_point(const PinholeIntrinsics& k, const Eigen::Vector3d& cam_pt) {
  if (cam_pt.z() <= 0.0) throw NumericError("cannot project a point at or behind the focal plane");
  return {k.fx * cam_pt.x() / cam_pt.z() + k.cx, k.fy * cam_pt.y() / cam_pt.z() + k.cy};
}

Eigen::Vector3d backproject(const PinholeIntrinsics& k, const Eigen::Vector2d& pixel,
                            double depth) {
  return {(pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth};
}

ProjectionResult project_point(const Camera& camera, const Eigen::Vector3d& world_pt) {
  ProjectionResult out;
  const Eigen::Vector3d cam_pt = camera.extrinsics.apply(world_pt);
  out.depth = cam_pt.z();
  if (cam_pt.z() <= camera.intrinsics.z_near) {
    out.pixel = {0.0, 0.0};
    out.visible = false;
    return out;
  }
  out.pixel = project_camera_point(camera.intrinsics, cam_pt);
  out.visible = out.pixel.x() >= 0.0 && out.pixel.x() <= camera.intrinsics.width &&
                out.pixel.y() >= 0.0 && out.pixel.y() <= camera.intrinsics.height;
  return out;
}

std::vector<Camera> build_hemispherical_rig(const RigConfig& config) {
  if (config.radius <= 0.0) throw ValidationError("rig radius must be positive");
  std::vector<Camera> cameras;
  cameras.reserve(9);
  const double deg = M_PI / 180.0;

  // Side cameras stay level: they target look_at's horizontal position at
  // their own height.
  const Eigen::Vector3d side_target(config.look_at.x(), config.look_at.y(), config.side_height);
  for (int az : {0, 90, 180, 270}) {
    Camera cam;
    cam.id = "side_" + std::to_string(az);
    cam.intrinsics = config.intrinsics;
    const Eigen::Vector3d eye(config.look_at.x() + config.radius * std::cos(az * deg),
                              config.look_at.y() + config.radius * std::sin(az * deg),
                              config.side_height);
    cam.extrinsics = look_at_extrinsics(eye, side_target);
    cameras.push_back(cam);
  }
  const double c45 = std::cos(45.0 * deg);
  for (int az : {45, 135, 225, 315}) {
    Camera cam;
    cam.id = "diag_" + std::to_string(az);
    cam.intrinsics = config.intrinsics;
    const Eigen::Vector3d eye = config.look_at +
                                config.radius * Eigen::Vector3d(c45 * std::cos(az * deg),
                                                                c45 * std::sin(az * deg), c45);
    cam.extrinsics = look_at_extrinsics(eye, config.look_at);
    cameras.push_back(cam);
  }
  Camera top;
  top.id = "top";
  top.intrinsics = config.intrinsics;
  top.extrinsics =
      look_at_extrinsics(config.look_at + Eigen::Vector3d(0.0, 0.0, config.radius), config.look_at);
  cameras.push_back(top);
  return cameras;
}

std::string serialize_rig(const std::vector<Camera>& cameras) {
  JsonWriter w;
  w.begin_object().key("cameras").begin_array();
  for (const Camera& cam : cameras) {
    w.begin_object();
    w.key("id").value(cam.id);
    w.key("fx").value(cam.intrinsics.fx);
    w.key("fy").value(cam.intrinsics.fy);
    w.key("cx").value(cam.intrinsics.cx);
    w.key("cy").value(cam.intrinsics.cy);
    w.key("width").value(cam.intrinsics.width);
    w.key("height").value(cam.intrinsics.height);
    w.key("z_near").value(cam.intrinsics.z_near);
    const Eigen::Quaterniond& q = cam.extrinsics.rotation;
    w.key("rotation").begin_array().value(q.w()).value(q.x()).value(q.y()).value(q.z()).end_array();
    w.key("translation").value(cam.extrinsics.translation);
    w.end_object();
  }
  w.end_array().end_object();
  return w.str() + "\n";
}

std::vector<Camera> parse_rig(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed rig JSON: ") + e.what());
  }
  try {
    std::vector<Camera> cameras;
    for (const auto& c : doc.at("cameras")) {
      Camera cam;
      cam.id = c.at("id").get<std::string>();
      cam.intrinsics.fx = c.at("fx").get<double>();
      cam.intrinsics.fy = c.at("fy").get<double>();
      cam.intrinsics.cx = c.at("cx").get<double>();
      cam.intrinsics.cy = c.at("cy").get<double>();
      cam.intrinsics.width = c.at("width").get<int>();
      cam.intrinsics.height = c.at("height").get<int>();
      cam.intrinsics.z_near = c.at("z_near").get<double>();
      const auto& q = c.at("rotation");
      if (q.size() != 4) throw ValidationError("camera rotation must have 4 values (w,x,y,z)");
      cam.extrinsics.rotation =
          Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                             q[3].get<double>());
      if (std::abs(cam.extrinsics.rotation.norm() - 1.0) > 1e-6) {
        throw ValidationError("camera '" + cam.id + "' rotation is not a unit quaternion");
      }
      cam.extrinsics.rotation.normalize();
      const auto& t = c.at("translation");
      if (t.size() != 3) throw ValidationError("camera translation must have 3 values");
      cam.extrinsics.translation =
          Eigen::Vector3d(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
      if (cam.intrinsics.fx <= 0.0 || cam.intrinsics.fy <= 0.0) {
        throw ValidationError("camera '" + cam.id + "' focal length must be positive");
      }
      if (cam.intrinsics.cx <= 0.0 || cam.intrinsics.cx >= cam.intrinsics.width ||
          cam.intrinsics.cy <= 0.0 || cam.intrinsics.cy >= cam.intrinsics.height) {
        throw ValidationError("camera '" + cam.id + "' principal point must lie inside the image");
      }
      cameras.push_back(cam);
    }
    if (cameras.empty()) throw ValidationError("rig defines no cameras");
    return cameras;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid rig JSON: ") + e.what());
  }
}

std::vector<Camera> load_rig(const std::string& path) { return parse_rig(read_text_file(path)); }

}  // namespace kinerec
