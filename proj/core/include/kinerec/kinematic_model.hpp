#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinerec/geometry.hpp"

namespace kinerec {

/// Joint vector, one entry per revolute joint in document order, radians.
using JointConfiguration = Eigen::VectorXd;

enum class JointType { kRevolute, kFixed };

struct Joint {
  std::string name;
  JointType type = JointType::kFixed;
  int parent_link = -1;
  int child_link = -1;
  RigidTransform origin;                       ///< parent link frame -> joint frame
  Eigen::Vector3d axis{0.0, 0.0, 1.0};         ///< unit axis in the joint frame (revolute only)
  double lower = 0.0;                          ///< position limit, radians (revolute only)
  double upper = 0.0;
  int dof_index = -1;                          ///< index into JointConfiguration, -1 for fixed
};

struct Link {
  std::string name;
  int parent_joint = -1;  ///< -1 for the root link
};

/// Immutable rigid-body tree restricted to revolute and fixed joints, with a
/// designated ordered list of keypoint links (keypoint 0 is always the root
/// link). Built by parse_model; all indices are resolved and validated there.
struct KinematicModel {
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;        ///< document order
  int root_link = -1;
  std::vector<int> topo_links;      ///< link indices, parents before children
  std::vector<int> dof_joints;      ///< joint index per dof
  std::vector<int> keypoint_links;  ///< link index per keypoint, keypoint 0 = root
  std::vector<std::vector<int>> ancestor_dofs;  ///< per link: dofs on the root->link path, ascending

  int dof() const { return static_cast<int>(dof_joints.size()); }
  int num_keypoints() const { return static_cast<int>(keypoint_links.size()); }
  std::vector<std::string> joint_names() const;
  std::vector<std::string> keypoint_names() const;
  Eigen::VectorXd lower_limits() const;
  Eigen::VectorXd upper_limits() const;
  int link_index(const std::string& link_name) const;  ///< -1 if absent
};

/// Parses a URDF document (revolute + fixed joints only). The optional
/// <keypoints><keypoint link="..."/></keypoints> element selects keypoint
/// links explicitly; without it the keypoints are the root link followed by
/// each revolute joint's child link in document order. Throws ValidationError
/// with the offending joint/link named on any structural problem.
KinematicModel parse_model(const std::string& urdf_xml);

KinematicModel load_model(const std::string& path);

/// Canonical URDF serialization: stable element order, %.17g numbers, the
/// keypoints element always present. parse_model(serialize_model(m)) preserves
/// every field bit-for-bit.
std::string serialize_model(const KinematicModel& model);

bool models_equal(const KinematicModel& a, const KinematicModel& b, double tol = 0.0);

/// World-frame transform of every link (indexed by link id) for configuration
/// q with the root link placed at root_pose. Revolute joints contribute
/// T_child = T_parent * origin * Rot(axis, q[dof]).
std::vector<RigidTransform> link_transforms(const KinematicModel& model,
                                            const JointConfiguration& q,
                                            const RigidTransform& root_pose);

/// N×3 world positions of the model's keypoints.
Eigen::MatrixX3d forward_kinematics(const KinematicModel& model, const JointConfiguration& q,
                                    const RigidTransform& root_pose = RigidTransform::identity());

/// Stacked keypoint Jacobian (3N × dof) at root_pose = identity: rows 3k..3k+2
/// hold d p_k / d q. Column d is axis_world × (p_k - o_d) for ancestor joints
/// and zero otherwise.
Eigen::MatrixXd keypoint_jacobian(const KinematicModel& model, const JointConfiguration& q);

}  // namespace kinerec
