#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace kinerec {

/// Rigid transform: rotation stored as a unit quaternion (w,x,y,z at every
/// interface) plus a translation in meters.
struct RigidTransform {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation{0.0, 0.0, 0.0};

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  /// this ∘ other: apply `other` first, then this.
  RigidTransform compose(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.rotation.normalize();
    out.translation = rotation * other.translation + translation;
    return out;
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.conjugate();
    out.translation = -(out.rotation * translation);
    return out;
  }
};

/// Applies a transform to every row of an N×3 point matrix.
inline Eigen::MatrixX3d transform_points(const RigidTransform& t, const Eigen::MatrixX3d& pts) {
  Eigen::MatrixX3d out(pts.rows(), 3);
  const Eigen::Matrix3d r = t.rotation.toRotationMatrix();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out.row(i) = (r * pts.row(i).transpose() + t.translation).transpose();
  }
  return out;
}

/// Extrinsic X-Y-Z (roll, pitch, yaw) composition: R = Rz(yaw) Ry(pitch) Rx(roll).
inline Eigen::Quaterniond quat_from_rpy(double roll, double pitch, double yaw) {
  Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                         Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                         Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX());
  q.normalize();
  return q;
}

inline Eigen::Quaterniond yaw_rotation(double yaw) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
}

/// Heading about +Z taken from the body x-axis. Returns false when the body
/// x-axis is within `tol` of vertical and no heading is defined.
inline bool extract_yaw(const Eigen::Quaterniond& q, double& yaw, double tol = 1e-8) {
  const Eigen::Vector3d forward = q * Eigen::Vector3d::UnitX();
  const double planar = std::hypot(forward.x(), forward.y());
  if (planar < tol) {
    yaw = 0.0;
    return false;
  }
  yaw = std::atan2(forward.y(), forward.x());
  return true;
}

/// Flips the sign of q if needed so that dot(q, reference) >= 0.
inline Eigen::Quaterniond hemisphere_align(const Eigen::Quaterniond& q,
                                           const Eigen::Quaterniond& reference) {
  if (q.coeffs().dot(reference.coeffs()) < 0.0) {
    return Eigen::Quaterniond(-q.w(), -q.x(), -q.y(), -q.z());
  }
  return q;
}

/// Normalized linear blend: normalize(a*w_a + b*(1-w_a)) with b hemisphere-aligned to a.
inline Eigen::Quaterniond nlerp(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b,
                                double weight_b) {
  const Eigen::Quaterniond b_aligned = hemisphere_align(b, a);
  Eigen::Quaterniond out;
  out.coeffs() = (1.0 - weight_b) * a.coeffs() + weight_b * b_aligned.coeffs();
  out.normalize();
  return out;
}

/// Shortest-path spherical interpolation with hemisphere alignment.
inline Eigen::Quaterniond quat_slerp(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b,
                                     double t) {
  const Eigen::Quaterniond b_aligned = hemisphere_align(b, a);
  return a.slerp(t, b_aligned);
}

/// Geodesic angle between two rotations, in radians. The atan2 form keeps
/// full precision for nearly identical rotations, where acos of the
/// quaternion dot product would lose half the significant digits.
inline double quat_geodesic_angle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond rel = a.conjugate() * b;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

/// The 24 rotation matrices with entries in {0, +-1} and determinant +1 (the
/// orientation-preserving symmetries of the cube). Every rotation is within
/// 62 degrees of one of them, which makes the set a compact hypothesis grid
/// for global orientation searches. The order is deterministic.
inline std::vector<Eigen::Matrix3d> cube_rotations() {
  std::vector<Eigen::Matrix3d> out;
  out.reserve(24);
  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  for (int i = 0; i < 3; ++i) {
    for (int si = -1; si <= 1; si += 2) {
      const Eigen::Vector3d c0 = si * eye.col(i);
      for (int j = 0; j < 3; ++j) {
        if (j == i) continue;
        for (int sj = -1; sj <= 1; sj += 2) {
          const Eigen::Vector3d c1 = sj * eye.col(j);
          Eigen::Matrix3d r;
          r.col(0) = c0;
          r.col(1) = c1;
          r.col(2) = c0.cross(c1);
          out.push_back(r);
        }
      }
    }
  }
  return out;
}

}  // namespace kinerec
