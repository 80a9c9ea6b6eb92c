#include <cmath>

#include <doctest.h>

#include "kinerec/errors.hpp"
#include "kinerec/kinematic_model.hpp"
#include "kinerec/trajectory_post.hpp"
#include "test_support.hpp"

using namespace kinerec;

namespace {
constexpr double kPi = 3.14159265358979323846;

RecoveredTrajectory step_trajectory() {
  // Scalar step series 0, 1, 1, 1, 1, 1, 1 on one joint.
  RecoveredTrajectory traj;
  traj.fps = 30.0;
  traj.joint_names = {"j0"};
  for (int i = 0; i < 7; ++i) {
    TrajectoryFrame frame;
    frame.qpos = Eigen::VectorXd::Constant(1, i == 0 ? 0.0 : 1.0);
    frame.root_pos = Eigen::Vector3d(i == 0 ? 0.0 : 1.0, 0.0, 0.0);
    traj.frames.push_back(frame);
  }
  return traj;
}

RecoveredTrajectory flagged_trajectory(int frames, std::initializer_list<int> failed) {
  RecoveredTrajectory traj;
  traj.fps = 10.0;
  traj.joint_names = {"a", "b"};
  for (int i = 0; i < frames; ++i) {
    TrajectoryFrame frame;
    frame.qpos = Eigen::VectorXd::Constant(2, static_cast<double>(i));
    frame.root_pos = Eigen::Vector3d(static_cast<double>(i), 0.0, 0.5);
    frame.root_rot = yaw_rotation(0.1 * i);
    traj.frames.push_back(frame);
  }
  for (int f : failed) traj.frames[static_cast<std::size_t>(f)].ik_converged = false;
  return traj;
}
}  // namespace

TEST_SUITE_BEGIN("trajectory_post");

TEST_CASE("exponential smoothing matches the closed form") {
  const RecoveredTrajectory smooth = ema_smooth(step_trajectory(), 0.5);
  // s_k = 1 - 0.5^k for the step series.
  CHECK(smooth.frames[0].qpos[0] == doctest::Approx(0.0));
  CHECK(smooth.frames[1].qpos[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(smooth.frames[2].qpos[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(smooth.frames[6].qpos[0] == doctest::Approx(0.984375).epsilon(1e-15));
  CHECK(smooth.frames[6].root_pos.x() == doctest::Approx(0.984375).epsilon(1e-15));

  // Alpha 1 is the identity.
  const RecoveredTrajectory same = ema_smooth(step_trajectory(), 1.0);
  for (std::size_t i = 0; i < same.frames.size(); ++i) {
    CHECK(same.frames[i].qpos[0] == step_trajectory().frames[i].qpos[0]);
  }
  CHECK_THROWS_AS(ema_smooth(step_trajectory(), 0.0), ValidationError);
  CHECK_THROWS_AS(ema_smooth(step_trajectory(), 1.5), ValidationError);
}

TEST_CASE("smoothing reduces total variation and keeps unit rotations") {
  RecoveredTrajectory traj;
  traj.fps = 30.0;
  traj.joint_names = {"j"};
  for (int i = 0; i < 60; ++i) {
    TrajectoryFrame frame;
    const double jitter = ((i * 2654435761u) % 1000) / 1000.0 - 0.5;
    frame.qpos = Eigen::VectorXd::Constant(1, std::sin(0.2 * i) + 0.4 * jitter);
    frame.root_pos = Eigen::Vector3d(0.01 * i, 0.3 * jitter, 0.7);
    frame.root_rot = yaw_rotation(0.05 * i + 0.3 * jitter);
    traj.frames.push_back(frame);
  }
  const RecoveredTrajectory smooth = ema_smooth(traj, 0.3);
  auto tv = [](const RecoveredTrajectory& t) {
    double sum = 0.0;
    for (std::size_t i = 1; i < t.frames.size(); ++i) {
      sum += std::abs(t.frames[i].qpos[0] - t.frames[i - 1].qpos[0]);
    }
    return sum;
  };
  CHECK(tv(smooth) < tv(traj));
  for (const TrajectoryFrame& frame : smooth.frames) {
    CHECK(std::abs(frame.root_rot.norm() - 1.0) < 1e-12);
  }

  // Sign-flipped but physically identical rotations do not cause jumps.
  RecoveredTrajectory flipped = traj;
  for (std::size_t i = 1; i < flipped.frames.size(); i += 2) {
    Eigen::Quaterniond& q = flipped.frames[i].root_rot;
    q = Eigen::Quaterniond(-q.w(), -q.x(), -q.y(), -q.z());
  }
  const RecoveredTrajectory smooth_flipped = ema_smooth(flipped, 0.3);
  for (std::size_t i = 0; i < smooth.frames.size(); ++i) {
    CHECK(quat_geodesic_angle(smooth_flipped.frames[i].root_rot,
                              smooth.frames[i].root_rot) < 1e-12);
  }
}

TEST_CASE("egocentric reframing anchors frame zero and is yaw invariant") {
  RecoveredTrajectory traj = flagged_trajectory(8, {});
  traj.frames[0].root_pos = Eigen::Vector3d(3.0, -4.0, 0.7);
  traj.frames[0].root_rot = quat_from_rpy(0.1, 0.0, 0.9);  // slight roll plus yaw

  const RecoveredTrajectory ego = to_egocentric(traj);
  CHECK_FALSE(ego.heading_fallback);
  // Frame 0: ground position removed, height kept, heading zeroed.
  CHECK(ego.frames[0].root_pos.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ego.frames[0].root_pos.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ego.frames[0].root_pos.z() == doctest::Approx(0.7).epsilon(1e-12));
  double yaw = 99.0;
  CHECK(extract_yaw(ego.frames[0].root_rot, yaw));
  CHECK(yaw == doctest::Approx(0.0).epsilon(1e-12));

  // A global yaw + planar shift applied to the input leaves the output fixed.
  RecoveredTrajectory moved = traj;
  RigidTransform global;
  global.rotation = yaw_rotation(1.3);
  global.translation = Eigen::Vector3d(10.0, -2.0, 0.0);
  for (TrajectoryFrame& frame : moved.frames) {
    frame.root_pos = global.apply(frame.root_pos);
    frame.root_rot = (global.rotation * frame.root_rot).normalized();
  }
  const RecoveredTrajectory ego_moved = to_egocentric(moved);
  for (std::size_t i = 0; i < ego.frames.size(); ++i) {
    CHECK((ego_moved.frames[i].root_pos - ego.frames[i].root_pos).norm() < 1e-9);
    CHECK(quat_geodesic_angle(ego_moved.frames[i].root_rot, ego.frames[i].root_rot) < 1e-9);
    CHECK((ego_moved.frames[i].qpos - ego.frames[i].qpos).norm() == 0.0);
  }
}

TEST_CASE("vertical first frame falls back to an identity heading") {
  RecoveredTrajectory traj = flagged_trajectory(3, {});
  traj.frames[0].root_rot =
      Eigen::Quaterniond(Eigen::AngleAxisd(-kPi / 2.0, Eigen::Vector3d::UnitY()));
  const RecoveredTrajectory ego = to_egocentric(traj);
  CHECK(ego.heading_fallback);
  // Position is still re-anchored even when the heading is degenerate.
  CHECK(ego.frames[0].root_pos.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ego.frames[0].root_pos.y() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gap interpolation fills short runs with original flags kept") {
  const RecoveredTrajectory traj = flagged_trajectory(10, {3, 4});
  const auto segments = interpolate_gaps(traj, 2);
  REQUIRE(segments.size() == 1);
  const RecoveredTrajectory& seg = segments[0];
  REQUIRE(seg.frames.size() == 10);
  // Linear interpolation between frames 2 and 5 at t = 1/3 and 2/3.
  CHECK(seg.frames[3].qpos[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(seg.frames[4].qpos[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(seg.frames[3].root_pos.x() == doctest::Approx(3.0).epsilon(1e-12));
  // Rotation: slerp from yaw 0.2 to yaw 0.5 hits 0.3 and 0.4.
  double yaw = 0.0;
  CHECK(extract_yaw(seg.frames[3].root_rot, yaw));
  CHECK(yaw == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(extract_yaw(seg.frames[4].root_rot, yaw));
  CHECK(yaw == doctest::Approx(0.4).epsilon(1e-12));
  // Failure flags on the filled frames survive so failures stay countable.
  CHECK_FALSE(seg.frames[3].ik_converged);
  CHECK_FALSE(seg.frames[4].ik_converged);
  CHECK(seg.frames[2].ik_converged);
}

TEST_CASE("long gaps split and edge failures are trimmed") {
  const auto split = interpolate_gaps(flagged_trajectory(10, {3, 4, 5}), 2);
  REQUIRE(split.size() == 2);
  CHECK(split[0].frames.size() == 3);  // frames 0..2
  CHECK(split[1].frames.size() == 4);  // frames 6..9
  CHECK(split[1].frames[0].qpos[0] == doctest::Approx(6.0));

  const auto trimmed = interpolate_gaps(flagged_trajectory(6, {0, 1, 5}), 3);
  REQUIRE(trimmed.size() == 1);
  CHECK(trimmed[0].frames.size() == 3);  // frames 2..4
  CHECK(trimmed[0].frames[0].qpos[0] == doctest::Approx(2.0));

  const auto none = interpolate_gaps(flagged_trajectory(4, {0, 1, 2, 3}), 5);
  CHECK(none.empty());

  // A zero max_gap always splits at failures.
  const auto zero_gap = interpolate_gaps(flagged_trajectory(5, {2}), 0);
  REQUIRE(zero_gap.size() == 2);
  CHECK(zero_gap[0].frames.size() == 2);
  CHECK(zero_gap[1].frames.size() == 2);
}

TEST_CASE("motion files round-trip and embed provenance last") {
  RecoveredTrajectory traj = flagged_trajectory(5, {});
  traj.frames[2].root_rot = quat_from_rpy(0.2, -0.3, 1.0);
  const std::string text = serialize_gmr(traj, "tool 1.0.0 config=00ff");
  CHECK(text.find("\"format\":\"gmr-motion/1\"") != std::string::npos);
  CHECK(text.find("\"provenance\":\"tool 1.0.0 config=00ff\"") != std::string::npos);
  // Provenance is the final key before the closing brace.
  CHECK(text.rfind("\"provenance\"") > text.rfind("\"frames\""));

  const RecoveredTrajectory back = parse_gmr(text);
  REQUIRE(back.frames.size() == 5);
  CHECK(back.fps == traj.fps);
  CHECK(back.joint_names == traj.joint_names);
  for (std::size_t i = 0; i < back.frames.size(); ++i) {
    CHECK((back.frames[i].qpos - traj.frames[i].qpos).norm() == 0.0);
    CHECK((back.frames[i].root_pos - traj.frames[i].root_pos).norm() == 0.0);
    CHECK(quat_geodesic_angle(back.frames[i].root_rot, traj.frames[i].root_rot) == 0.0);
    // Convergence flags are not serialized; imports assume success.
    CHECK(back.frames[i].ik_converged);
    CHECK(back.frames[i].pnp_converged);
  }
  // Re-serialization is byte-stable.
  CHECK(serialize_gmr(back, "tool 1.0.0 config=00ff") == text);

  kinerec_test::TempDir tmp("gmr");
  export_gmr(traj, tmp.path("motion.json"));
  const RecoveredTrajectory loaded = import_gmr(tmp.path("motion.json"));
  CHECK(loaded.frames.size() == 5);
}

TEST_CASE("malformed motion files name the offending frame") {
  // Identity rotations everywhere so the serialized quaternions are the exact
  // text [1,0,0,0], which the test rewrites surgically.
  RecoveredTrajectory traj;
  traj.fps = 25.0;
  traj.joint_names = {"a"};
  for (int i = 0; i < 4; ++i) {
    TrajectoryFrame frame;
    frame.qpos = Eigen::VectorXd::Constant(1, 0.1 * i);
    frame.root_pos = Eigen::Vector3d(0.0, 0.0, 0.5);
    traj.frames.push_back(frame);
  }
  const std::string text = serialize_gmr(traj);
  const std::string quat_full = "\"root_rot\":[1,0,0,0]";

  auto nth_occurrence = [&](const std::string& hay, int nth) {
    std::size_t pos = hay.find(quat_full);
    for (int i = 0; i < nth && pos != std::string::npos; ++i) {
      pos = hay.find(quat_full, pos + 1);
    }
    REQUIRE(pos != std::string::npos);
    return pos;
  };

  // Quaternion with norm far from one at frame 2.
  std::string bad_text = text;
  bad_text.replace(nth_occurrence(bad_text, 2), quat_full.size(),
                   "\"root_rot\":[0.9,0,0,0]");
  CHECK_THROWS_WITH_AS(parse_gmr(bad_text), doctest::Contains("frame 2"), ValidationError);

  // Three-element quaternion at frame 0.
  std::string three = text;
  three.replace(nth_occurrence(three, 0), quat_full.size(), "\"root_rot\":[1,0,0]");
  CHECK_THROWS_WITH_AS(parse_gmr(three), doctest::Contains("frame 0"), ValidationError);

  // A slightly denormalized quaternion (within 1e-6) is renormalized.
  std::string renorm = text;
  renorm.replace(nth_occurrence(renorm, 0), quat_full.size(),
                 "\"root_rot\":[1.0000002,0,0,0]");
  const RecoveredTrajectory fixed = parse_gmr(renorm);
  CHECK(std::abs(fixed.frames[0].root_rot.norm() - 1.0) < 1e-12);

  CHECK_THROWS_WITH_AS(parse_gmr(R"({"format":"other/9","fps":30,"joint_names":[],"frames":[]})"),
                       doctest::Contains("format"), ValidationError);
  CHECK_THROWS_AS(parse_gmr("{"), ValidationError);
}

TEST_CASE("trajectory validation names frames and joints") {
  RecoveredTrajectory traj = flagged_trajectory(3, {});
  CHECK_NOTHROW(validate_trajectory(traj));

  RecoveredTrajectory bad_fps = traj;
  bad_fps.fps = 0.0;
  CHECK_THROWS_AS(validate_trajectory(bad_fps), ValidationError);

  RecoveredTrajectory bad_dof = traj;
  bad_dof.frames[1].qpos.resize(5);
  bad_dof.frames[1].qpos.setZero();
  CHECK_THROWS_WITH_AS(validate_trajectory(bad_dof), doctest::Contains("frame 1"),
                       ValidationError);

  RecoveredTrajectory empty;
  empty.joint_names = {"a"};
  CHECK_THROWS_AS(validate_trajectory(empty), ValidationError);

  // Model-aware validation enforces joint limits by name.
  const KinematicModel model = load_model(kinerec_test::fixture("planar_two_link.urdf"));
  RecoveredTrajectory armed;
  armed.fps = 30.0;
  armed.joint_names = model.joint_names();
  TrajectoryFrame frame;
  frame.qpos = Eigen::VectorXd::Zero(2);
  armed.frames.push_back(frame);
  CHECK_NOTHROW(validate_trajectory(armed, model));
  armed.frames[0].qpos[1] = 2.5;  // elbow limit is 2
  CHECK_THROWS_WITH_AS(validate_trajectory(armed, model), doctest::Contains("elbow"),
                       ValidationError);
}

TEST_SUITE_END();
