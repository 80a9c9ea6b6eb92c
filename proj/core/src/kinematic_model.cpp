#include "kinerec/kinematic_model.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/serialization.hpp"

namespace kinerec {
namespace {

namespace pt = boost::property_tree;

Eigen::Vector3d parse_triple(const std::string& text, const std::string& what) {
  std::istringstream ss(text);
  Eigen::Vector3d v;
  if (!(ss >> v.x() >> v.y() >> v.z())) {
    throw ValidationError("cannot parse " + what + " from '" + text + "'");
  }
  std::string rest;
  if (ss >> rest) {
    throw ValidationError("trailing content in " + what + ": '" + text + "'");
  }
  return v;
}

RigidTransform parse_origin(const pt::ptree& element) {
  RigidTransform t;
  if (auto origin = element.get_child_optional("origin")) {
    const std::string xyz = origin->get<std::string>("<xmlattr>.xyz", "0 0 0");
    const std::string rpy = origin->get<std::string>("<xmlattr>.rpy", "0 0 0");
    t.translation = parse_triple(xyz, "origin xyz");
    const Eigen::Vector3d r = parse_triple(rpy, "origin rpy");
    t.rotation = quat_from_rpy(r.x(), r.y(), r.z());
  }
  return t;
}

std::string triple_to_string(const Eigen::Vector3d& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

/// Recovers rpy from a quaternion such that quat_from_rpy round-trips the
/// rotation (extrinsic X-Y-Z). Used only by serialize_model.
Eigen::Vector3d rpy_from_quat(const Eigen::Quaterniond& q) {
  const Eigen::Matrix3d r = q.toRotationMatrix();
  // R = Rz(yaw) Ry(pitch) Rx(roll)
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  double roll, yaw;
  if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: fold everything into roll.
    roll = std::atan2(-r(1, 2), r(1, 1));
    yaw = 0.0;
  }
  return {roll, pitch, yaw};
}

}  // namespace

std::vector<std::string> KinematicModel::joint_names() const {
  std::vector<std::string> names;
  names.reserve(dof_joints.size());
  for (int j : dof_joints) names.push_back(joints[j].name);
  return names;
}

std::vector<std::string> KinematicModel::keypoint_names() const {
  std::vector<std::string> names;
  names.reserve(keypoint_links.size());
  for (int l : keypoint_links) names.push_back(links[l].name);
  return names;
}

Eigen::VectorXd KinematicModel::lower_limits() const {
  Eigen::VectorXd v(dof());
  for (int d = 0; d < dof(); ++d) v[d] = joints[dof_joints[d]].lower;
  return v;
}

Eigen::VectorXd KinematicModel::upper_limits() const {
  Eigen::VectorXd v(dof());
  for (int d = 0; d < dof(); ++d) v[d] = joints[dof_joints[d]].upper;
  return v;
}

int KinematicModel::link_index(const std::string& link_name) const {
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].name == link_name) return static_cast<int>(i);
  }
  return -1;
}

KinematicModel parse_model(const std::string& urdf_xml) {
  pt::ptree doc;
  std::istringstream ss(urdf_xml);
  try {
    pt::read_xml(ss, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw ValidationError(std::string("malformed XML: ") + e.what());
  }

  auto robot = doc.get_child_optional("robot");
  if (!robot) throw ValidationError("document has no <robot> root element");

  KinematicModel model;
  model.name = robot->get<std::string>("<xmlattr>.name", "");

  std::map<std::string, int> link_index;
  std::set<std::string> joint_names;
  std::vector<std::string> keypoint_names;

  for (const auto& [tag, element] : *robot) {
    if (tag == "link") {
      const std::string name = element.get<std::string>("<xmlattr>.name", "");
      if (name.empty()) throw ValidationError("link without a name attribute");
      if (link_index.count(name)) throw ValidationError("duplicate link name '" + name + "'");
      link_index[name] = static_cast<int>(model.links.size());
      model.links.push_back({name, -1});
    } else if (tag == "keypoints") {
      for (const auto& [ktag, kelement] : element) {
        if (ktag == "<xmlattr>") continue;
        if (ktag != "keypoint") {
          throw ValidationError("unexpected element <" + ktag + "> inside <keypoints>");
        }
        const std::string link = kelement.get<std::string>("<xmlattr>.link", "");
        if (link.empty()) throw ValidationError("keypoint without a link attribute");
        keypoint_names.push_back(link);
      }
    }
  }
  if (model.links.empty()) throw ValidationError("model has no links");

  for (const auto& [tag, element] : *robot) {
    if (tag != "joint") continue;
    Joint joint;
    joint.name = element.get<std::string>("<xmlattr>.name", "");
    if (joint.name.empty()) throw ValidationError("joint without a name attribute");
    if (joint_names.count(joint.name)) {
      throw ValidationError("duplicate joint name '" + joint.name + "'");
    }
    joint_names.insert(joint.name);

    const std::string type = element.get<std::string>("<xmlattr>.type", "");
    if (type == "revolute") {
      joint.type = JointType::kRevolute;
    } else if (type == "fixed") {
      joint.type = JointType::kFixed;
    } else {
      throw ValidationError("unsupported joint type '" + type + "' in joint '" + joint.name +
                            "' (only revolute and fixed are supported)");
    }

    const std::string parent = element.get<std::string>("parent.<xmlattr>.link", "");
    const std::string child = element.get<std::string>("child.<xmlattr>.link", "");
    if (!link_index.count(parent)) {
      throw ValidationError("joint '" + joint.name + "' references unknown parent link '" +
                            parent + "'");
    }
    if (!link_index.count(child)) {
      throw ValidationError("joint '" + joint.name + "' references unknown child link '" + child +
                            "'");
    }
    joint.parent_link = link_index[parent];
    joint.child_link = link_index[child];
    joint.origin = parse_origin(element);

    if (joint.type == JointType::kRevolute) {
      auto axis = element.get_child_optional("axis");
      if (!axis) throw ValidationError("revolute joint '" + joint.name + "' has no axis");
      joint.axis = parse_triple(axis->get<std::string>("<xmlattr>.xyz", ""), "axis xyz");
      const double norm = joint.axis.norm();
      if (norm < 1e-12) {
        throw ValidationError("revolute joint '" + joint.name + "' has a zero axis");
      }
      joint.axis /= norm;

      auto limit = element.get_child_optional("limit");
      if (!limit) throw ValidationError("revolute joint '" + joint.name + "' has no limit");
      auto lower = limit->get_optional<double>("<xmlattr>.lower");
      auto upper = limit->get_optional<double>("<xmlattr>.upper");
      if (!lower || !upper) {
        throw ValidationError("revolute joint '" + joint.name +
                              "' limit must specify both lower and upper");
      }
      joint.lower = *lower;
      joint.upper = *upper;
      if (joint.lower > joint.upper) {
        throw ValidationError("revolute joint '" + joint.name + "' has lower > upper");
      }
      joint.dof_index = static_cast<int>(model.dof_joints.size());
      model.dof_joints.push_back(static_cast<int>(model.joints.size()));
    }

    if (model.links[joint.child_link].parent_joint != -1) {
      throw ValidationError("link '" + child + "' has multiple parent joints");
    }
    model.links[joint.child_link].parent_joint = static_cast<int>(model.joints.size());
    model.joints.push_back(joint);
  }

  // Exactly one root, everything reachable from it (no cycles, no islands).
  model.root_link = -1;
  for (std::size_t i = 0; i < model.links.size(); ++i) {
    if (model.links[i].parent_joint != -1) continue;
    if (model.root_link != -1) {
      throw ValidationError("multiple root links: '" + model.links[model.root_link].name +
                            "' and '" + model.links[i].name + "'");
    }
    model.root_link = static_cast<int>(i);
  }
  if (model.root_link == -1) {
    throw ValidationError("no root link: the joint graph contains a cycle");
  }

  std::vector<std::vector<int>> children(model.links.size());
  for (std::size_t j = 0; j < model.joints.size(); ++j) {
    children[model.joints[j].parent_link].push_back(static_cast<int>(j));
  }
  std::deque<int> frontier{model.root_link};
  std::vector<bool> visited(model.links.size(), false);
  visited[model.root_link] = true;
  while (!frontier.empty()) {
    const int link = frontier.front();
    frontier.pop_front();
    model.topo_links.push_back(link);
    for (int j : children[link]) {
      const int child = model.joints[j].child_link;
      if (visited[child]) {
        throw ValidationError("link '" + model.links[child].name + "' is visited twice: cycle");
      }
      visited[child] = true;
      frontier.push_back(child);
    }
  }
  if (model.topo_links.size() != model.links.size()) {
    for (std::size_t i = 0; i < model.links.size(); ++i) {
      if (!visited[i]) {
        throw ValidationError("link '" + model.links[i].name +
                              "' is not reachable from the root (cycle or disconnected subtree)");
      }
    }
  }

  model.ancestor_dofs.assign(model.links.size(), {});
  for (int link : model.topo_links) {
    const int pj = model.links[link].parent_joint;
    if (pj == -1) continue;
    const Joint& joint = model.joints[pj];
    model.ancestor_dofs[link] = model.ancestor_dofs[joint.parent_link];
    if (joint.dof_index != -1) model.ancestor_dofs[link].push_back(joint.dof_index);
  }

  if (keypoint_names.empty()) {
    model.keypoint_links.push_back(model.root_link);
    for (int j : model.dof_joints) model.keypoint_links.push_back(model.joints[j].child_link);
  } else {
    std::set<std::string> seen;
    for (const std::string& name : keypoint_names) {
      if (!link_index.count(name)) {
        throw ValidationError("keypoint references unknown link '" + name + "'");
      }
      if (!seen.insert(name).second) {
        throw ValidationError("duplicate keypoint link '" + name + "'");
      }
      model.keypoint_links.push_back(link_index[name]);
    }
    if (model.keypoint_links.front() != model.root_link) {
      throw ValidationError("the first keypoint must be the root link '" +
                            model.links[model.root_link].name + "'");
    }
  }
  if (model.num_keypoints() < 2) {
    throw ValidationError("model must define at least 2 keypoints");
  }
  return model;
}

KinematicModel load_model(const std::string& path) {
  return parse_model(read_text_file(path));
}

std::string serialize_model(const KinematicModel& model) {
  std::string out = "<?xml version=\"1.0\"?>\n<robot name=\"" + model.name + "\">\n";
  for (const Link& link : model.links) {
    out += "  <link name=\"" + link.name + "\"/>\n";
  }
  for (const Joint& joint : model.joints) {
    out += "  <joint name=\"" + joint.name + "\" type=\"";
    out += joint.type == JointType::kRevolute ? "revolute" : "fixed";
    out += "\">\n";
    out += "    <parent link=\"" + model.links[joint.parent_link].name + "\"/>\n";
    out += "    <child link=\"" + model.links[joint.child_link].name + "\"/>\n";
    const Eigen::Vector3d rpy = rpy_from_quat(joint.origin.rotation);
    out += "    <origin xyz=\"" + triple_to_string(joint.origin.translation) + "\" rpy=\"" +
           triple_to_string(rpy) + "\"/>\n";
    if (joint.type == JointType::kRevolute) {
      out += "    <axis xyz=\"" + triple_to_string(joint.axis) + "\"/>\n";
      out += "    <limit lower=\"" + format_double(joint.lower) + "\" upper=\"" +
             format_double(joint.upper) + "\"/>\n";
    }
    out += "  </joint>\n";
  }
  out += "  <keypoints>\n";
  for (int l : model.keypoint_links) {
    out += "    <keypoint link=\"" + model.links[l].name + "\"/>\n";
  }
  out += "  </keypoints>\n</robot>\n";
  return out;
}

bool models_equal(const KinematicModel& a, const KinematicModel& b, double tol) {
  if (a.name != b.name) return false;
  if (a.links.size() != b.links.size() || a.joints.size() != b.joints.size()) return false;
  if (a.root_link != b.root_link || a.keypoint_links != b.keypoint_links) return false;
  if (a.dof_joints != b.dof_joints) return false;
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    if (a.links[i].name != b.links[i].name) return false;
    if (a.links[i].parent_joint != b.links[i].parent_joint) return false;
  }
  auto close = [tol](double x, double y) { return std::abs(x - y) <= tol; };
  for (std::size_t i = 0; i < a.joints.size(); ++i) {
    const Joint& ja = a.joints[i];
    const Joint& jb = b.joints[i];
    if (ja.name != jb.name || ja.type != jb.type) return false;
    if (ja.parent_link != jb.parent_link || ja.child_link != jb.child_link) return false;
    if (ja.dof_index != jb.dof_index) return false;
    if (!(ja.origin.translation - jb.origin.translation).isZero(tol)) return false;
    if (quat_geodesic_angle(ja.origin.rotation, jb.origin.rotation) > tol) return false;
    if (ja.type == JointType::kRevolute) {
      if (!(ja.axis - jb.axis).isZero(tol)) return false;
      if (!close(ja.lower, jb.lower) || !close(ja.upper, jb.upper)) return false;
    }
  }
  return true;
}

std::vector<RigidTransform> link_transforms(const KinematicModel& model,
                                            const JointConfiguration& q,
                                            const RigidTransform& root_pose) {
  if (q.size() != model.dof()) {
    throw ValidationError("configuration has " + std::to_string(q.size()) + " values, model has " +
                          std::to_string(model.dof()) + " degrees of freedom");
  }
  std::vector<RigidTransform> world(model.links.size());
  for (int link : model.topo_links) {
    const int pj = model.links[link].parent_joint;
    if (pj == -1) {
      world[link] = root_pose;
      continue;
    }
    const Joint& joint = model.joints[pj];
    RigidTransform t = world[joint.parent_link].compose(joint.origin);
    if (joint.type == JointType::kRevolute) {
      RigidTransform spin;
      spin.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(q[joint.dof_index], joint.axis));
      t = t.compose(spin);
    }
    world[link] = t;
  }
  return world;
}

Eigen::MatrixX3d forward_kinematics(const KinematicModel& model, const JointConfiguration& q,
                                    const RigidTransform& root_pose) {
  const std::vector<RigidTransform> world = link_transforms(model, q, root_pose);
  Eigen::MatrixX3d out(model.num_keypoints(), 3);
  for (int k = 0; k < model.num_keypoints(); ++k) {
    out.row(k) = world[model.keypoint_links[k]].translation.transpose();
  }
  return out;
}

Eigen::MatrixXd keypoint_jacobian(const KinematicModel& model, const JointConfiguration& q) {
  const std::vector<RigidTransform> world =
      link_transforms(model, q, RigidTransform::identity());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * model.num_keypoints(), model.dof());
  for (int k = 0; k < model.num_keypoints(); ++k) {
    const int link = model.keypoint_links[k];
    const Eigen::Vector3d p = world[link].translation;
    for (int d : model.ancestor_dofs[link]) {
      const Joint& joint = model.joints[model.dof_joints[d]];
      const RigidTransform& tc = world[joint.child_link];
      const Eigen::Vector3d axis_world = tc.rotation * joint.axis;
      jac.block<3, 1>(3 * k, d) = axis_world.cross(p - tc.translation);
    }
  }
  return jac;
}

}  // namespace kinerec
