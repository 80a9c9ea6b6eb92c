#include "kinerec/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/metrics_eval.hpp"
#include "kinerec/serialization.hpp"
#include "kinerec/trajectory_post.hpp"
#include "kinerec/version.hpp"

namespace kinerec {
namespace {

/// One configuration key: its dotted name, value type, and an accessor into
/// the owning PipelineConfig field. The table below is the complete key set;
/// anything else is rejected by name.
struct KeyEntry {
  const char* key;
  char type;  // 's' string, 'd' double, 'i' int, 'u' uint64, 'b' bool, 'o' optimizer
  std::function<std::string*(PipelineConfig&)> s;
  std::function<double*(PipelineConfig&)> d;
  std::function<int*(PipelineConfig&)> i;
  std::function<std::uint64_t*(PipelineConfig&)> u;
  std::function<bool*(PipelineConfig&)> b;
  std::function<Optimizer*(PipelineConfig&)> o;
};

const char* optimizer_name(Optimizer opt) {
  return opt == Optimizer::kAdam ? "adam" : "sgd";
}

Optimizer parse_optimizer_name(const std::string& text, const std::string& key) {
  if (text == "sgd") return Optimizer::kSgdMomentum;
  if (text == "adam") return Optimizer::kAdam;
  throw ValidationError("key \"" + key + "\" expects \"sgd\" or \"adam\", got \"" + text + "\"");
}

KeyEntry entry_s(const char* key, std::function<std::string*(PipelineConfig&)> get) {
  KeyEntry e;
  e.key = key;
  e.type = 's';
  e.s = std::move(get);
  return e;
}
KeyEntry entry_d(const char* key, std::function<double*(PipelineConfig&)> get) {
  KeyEntry e;
  e.key = key;
  e.type = 'd';
  e.d = std::move(get);
  return e;
}
KeyEntry entry_i(const char* key, std::function<int*(PipelineConfig&)> get) {
  KeyEntry e;
  e.key = key;
  e.type = 'i';
  e.i = std::move(get);
  return e;
}
KeyEntry entry_u(const char* key, std::function<std::uint64_t*(PipelineConfig&)> get) {
  KeyEntry e;
  e.key = key;
  e.type = 'u';
  e.u = std::move(get);
  return e;
}
KeyEntry entry_b(const char* key, std::function<bool*(PipelineConfig&)> get) {
  KeyEntry e;
  e.key = key;
  e.type = 'b';
  e.b = std::move(get);
  return e;
}
KeyEntry entry_o(const char* key, std::function<Optimizer*(PipelineConfig&)> get) {
  KeyEntry e;
  e.key = key;
  e.type = 'o';
  e.o = std::move(get);
  return e;
}

const std::vector<KeyEntry>& key_table() {
  using C = PipelineConfig;
  static const std::vector<KeyEntry> table = {
      entry_s("model_path", [](C& c) { return &c.model_path; }),
      entry_u("seed", [](C& c) { return &c.seed; }),
      entry_d("fps", [](C& c) { return &c.fps; }),
      entry_i("frames", [](C& c) { return &c.frames; }),
      entry_i("distill_k", [](C& c) { return &c.distill_k; }),
      entry_d("ema.alpha", [](C& c) { return &c.ema_alpha; }),
      entry_s("camera_id", [](C& c) { return &c.camera_id; }),
      entry_i("max_gap", [](C& c) { return &c.max_gap; }),
      entry_d("rig.radius", [](C& c) { return &c.rig.radius; }),
      entry_d("rig.side_height", [](C& c) { return &c.rig.side_height; }),
      entry_d("rig.look_at_x", [](C& c) { return &c.rig.look_at.x(); }),
      entry_d("rig.look_at_y", [](C& c) { return &c.rig.look_at.y(); }),
      entry_d("rig.look_at_z", [](C& c) { return &c.rig.look_at.z(); }),
      entry_d("rig.fx", [](C& c) { return &c.rig.intrinsics.fx; }),
      entry_d("rig.fy", [](C& c) { return &c.rig.intrinsics.fy; }),
      entry_d("rig.cx", [](C& c) { return &c.rig.intrinsics.cx; }),
      entry_d("rig.cy", [](C& c) { return &c.rig.intrinsics.cy; }),
      entry_i("rig.width", [](C& c) { return &c.rig.intrinsics.width; }),
      entry_i("rig.height", [](C& c) { return &c.rig.intrinsics.height; }),
      entry_d("rig.z_near", [](C& c) { return &c.rig.intrinsics.z_near; }),
      entry_d("noise.pixel_sigma", [](C& c) { return &c.noise.pixel_sigma; }),
      entry_d("noise.outlier_rate", [](C& c) { return &c.noise.outlier_rate; }),
      entry_d("noise.outlier_radius", [](C& c) { return &c.noise.outlier_radius; }),
      entry_d("noise.dropout_rate", [](C& c) { return &c.noise.dropout_rate; }),
      entry_u("noise.seed", [](C& c) { return &c.noise.seed; }),
      entry_d("train.learning_rate", [](C& c) { return &c.train.learning_rate; }),
      entry_d("train.momentum", [](C& c) { return &c.train.momentum; }),
      entry_o("train.optimizer", [](C& c) { return &c.train.optimizer; }),
      entry_i("train.batch_size", [](C& c) { return &c.train.batch_size; }),
      entry_i("train.epochs", [](C& c) { return &c.train.epochs; }),
      entry_i("train.hidden", [](C& c) { return &c.train_hidden; }),
      entry_d("train.validation_fraction", [](C& c) { return &c.train.validation_fraction; }),
      entry_u("train.seed", [](C& c) { return &c.train.seed; }),
      entry_i("ik.max_iters", [](C& c) { return &c.ik.max_iters; }),
      entry_d("ik.tol_rms", [](C& c) { return &c.ik.tol_rms; }),
      entry_d("ik.damping_init", [](C& c) { return &c.ik.damping_init; }),
      entry_d("ik.converged_rms", [](C& c) { return &c.ik.converged_rms; }),
      entry_b("ik.multi_start", [](C& c) { return &c.ik.multi_start; }),
      entry_i("ik.multi_start_seeds", [](C& c) { return &c.ik.multi_start_seeds; }),
      entry_u("ik.seed", [](C& c) { return &c.ik.seed; }),
      entry_i("pnp.max_iters", [](C& c) { return &c.pnp.max_iters; }),
      entry_d("pnp.tol_px", [](C& c) { return &c.pnp.tol_px; }),
  };
  return table;
}

const KeyEntry& find_key(const std::string& key) {
  for (const KeyEntry& e : key_table()) {
    if (key == e.key) return e;
  }
  throw ValidationError("unknown configuration key \"" + key + "\"");
}

void set_from_json(PipelineConfig& config, const KeyEntry& e, const nlohmann::json& v) {
  const std::string key(e.key);
  switch (e.type) {
    case 's':
      if (!v.is_string()) throw ValidationError("key \"" + key + "\" expects a string");
      *e.s(config) = v.get<std::string>();
      break;
    case 'd':
      if (!v.is_number()) throw ValidationError("key \"" + key + "\" expects a number");
      *e.d(config) = v.get<double>();
      break;
    case 'i':
      if (!v.is_number_integer()) throw ValidationError("key \"" + key + "\" expects an integer");
      *e.i(config) = v.get<int>();
      break;
    case 'u':
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                     v.get<std::int64_t>() < 0)) {
        throw ValidationError("key \"" + key + "\" expects a nonnegative integer");
      }
      *e.u(config) = v.get<std::uint64_t>();
      break;
    case 'b':
      if (!v.is_boolean()) throw ValidationError("key \"" + key + "\" expects a boolean");
      *e.b(config) = v.get<bool>();
      break;
    case 'o':
      if (!v.is_string()) throw ValidationError("key \"" + key + "\" expects a string");
      *e.o(config) = parse_optimizer_name(v.get<std::string>(), key);
      break;
  }
}

void set_from_string(PipelineConfig& config, const KeyEntry& e, const std::string& text) {
  const std::string key(e.key);
  const std::string bad = "invalid value \"" + text + "\" for key \"" + key + "\"";
  try {
    std::size_t pos = 0;
    switch (e.type) {
      case 's':
        *e.s(config) = text;
        break;
      case 'd':
        *e.d(config) = std::stod(text, &pos);
        if (pos != text.size()) throw ValidationError(bad);
        break;
      case 'i':
        *e.i(config) = std::stoi(text, &pos);
        if (pos != text.size()) throw ValidationError(bad);
        break;
      case 'u':
        *e.u(config) = std::stoull(text, &pos);
        if (pos != text.size()) throw ValidationError(bad);
        break;
      case 'b':
        if (text == "true" || text == "1") {
          *e.b(config) = true;
        } else if (text == "false" || text == "0") {
          *e.b(config) = false;
        } else {
          throw ValidationError(bad + " (expected true/false)");
        }
        break;
      case 'o':
        *e.o(config) = parse_optimizer_name(text, key);
        break;
    }
  } catch (const std::invalid_argument&) {
    throw ValidationError(bad);
  } catch (const std::out_of_range&) {
    throw ValidationError(bad + " (out of range)");
  }
}

void validate_config(const PipelineConfig& config) {
  if (config.frames < 1) throw ValidationError("frames must be at least 1");
  if (!(config.fps > 0.0)) throw ValidationError("fps must be positive");
  if (config.distill_k < 1) throw ValidationError("distill_k must be at least 1");
  if (!(config.ema_alpha > 0.0) || config.ema_alpha > 1.0) {
    throw ValidationError("ema.alpha must lie in (0, 1]");
  }
  if (config.max_gap < 0) throw ValidationError("max_gap must be nonnegative");
  if (config.train_hidden < 1) throw ValidationError("train.hidden must be at least 1");
  if (!(config.rig.radius > 0.0)) throw ValidationError("rig.radius must be positive");
  if (!(config.rig.intrinsics.fx > 0.0) || !(config.rig.intrinsics.fy > 0.0)) {
    throw ValidationError("rig focal lengths must be positive");
  }
  if (config.rig.intrinsics.width < 1 || config.rig.intrinsics.height < 1) {
    throw ValidationError("rig image size must be positive");
  }
  if (!(config.rig.intrinsics.z_near > 0.0)) throw ValidationError("rig.z_near must be positive");
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Writes the "<dataset>.manifest.json" sidecar recording what produced a
/// dataset file and the hash of its exact bytes.
void write_manifest(const std::string& dataset_path, const PipelineConfig& config,
                    std::size_t record_count) {
  const std::string bytes = read_text_file(dataset_path);
  JsonWriter w;
  w.begin_object();
  w.key("tool").value(kToolName);
  w.key("version").value(kToolVersion);
  w.key("config_hash").value(config_hash_hex(config));
  w.key("seed").value(config.seed);
  w.key("record_count").value(static_cast<std::uint64_t>(record_count));
  w.key("dataset_hash").value(hash_hex(fnv1a64(bytes)));
  w.end_object();
  write_text_file(dataset_path + ".manifest.json", w.str() + "\n");
}

const Camera& rig_camera(const std::vector<Camera>& rig, const std::string& camera_id) {
  for (const Camera& c : rig) {
    if (c.id == camera_id) return c;
  }
  throw ValidationError("camera \"" + camera_id + "\" is not in the rig");
}

/// Lifter input for one record: invisible keypoints replaced by the root
/// pixel, then root-centered max-abs normalization, flattened row-major.
Eigen::VectorXd lifter_input(const KeypointFrame& record) {
  Eigen::MatrixX2d filled = record.pixel_2d;
  for (Eigen::Index i = 0; i < filled.rows(); ++i) {
    if (!record.visibility[static_cast<std::size_t>(i)]) filled.row(i) = filled.row(0);
  }
  return flatten_2d(normalize_2d(filled, 0).coords);
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed configuration JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("configuration must be a JSON object");
  PipelineConfig config;
  for (const auto& [key, value] : doc.items()) {
    set_from_json(config, find_key(key), value);
  }
  return config;
}

PipelineConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

void apply_override(PipelineConfig& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override \"" + assignment + "\" must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  set_from_string(config, find_key(key), value);
}

std::string serialize_config(const PipelineConfig& config) {
  PipelineConfig mutable_copy = config;
  JsonWriter w;
  w.begin_object();
  for (const KeyEntry& e : key_table()) {
    w.key(e.key);
    switch (e.type) {
      case 's':
        w.value(*e.s(mutable_copy));
        break;
      case 'd':
        w.value(*e.d(mutable_copy));
        break;
      case 'i':
        w.value(*e.i(mutable_copy));
        break;
      case 'u':
        w.value(*e.u(mutable_copy));
        break;
      case 'b':
        w.value(*e.b(mutable_copy));
        break;
      case 'o':
        w.value(std::string(optimizer_name(*e.o(mutable_copy))));
        break;
    }
  }
  w.end_object();
  return w.str() + "\n";
}

std::string config_hash_hex(const PipelineConfig& config) {
  return hash_hex(fnv1a64(serialize_config(config)));
}

std::string provenance_string(const PipelineConfig& config) {
  return std::string(kToolName) + " " + kToolVersion + " config=" + config_hash_hex(config);
}

std::vector<Camera> make_rig(const PipelineConfig& config) {
  return build_hemispherical_rig(config.rig);
}

void cmd_synth(const PipelineConfig& config, const std::string& out_path) {
  validate_config(config);
  const KinematicModel model = load_model(config.model_path);
  TrajectoryConfig traj;
  traj.frames = config.frames;
  traj.fps = config.fps;
  traj.seed = config.seed;
  const std::vector<JointConfiguration> qs = sample_joint_trajectory(model, traj);
  const std::vector<RigidTransform> roots = sample_root_walk(config.frames, config.fps,
                                                             config.seed);
  const std::vector<Camera> rig = make_rig(config);
  const std::vector<KeypointFrame> records = render_annotations(model, rig, qs, roots);
  write_dataset(records, out_path);
  write_manifest(out_path, config, records.size());
}

void cmd_distill(const PipelineConfig& config, const std::string& in_path,
                 const std::string& out_path) {
  validate_config(config);
  const std::vector<KeypointFrame> records = read_dataset(in_path);
  if (records.empty()) throw ValidationError(in_path + ": dataset is empty");
  if (records[0].q.size() == 0) {
    throw ValidationError("records carry no joint configuration to distill on");
  }

  std::vector<std::int64_t> frame_ids;
  std::vector<JointConfiguration> qs;
  std::map<std::int64_t, int> frame_order;
  for (const KeypointFrame& record : records) {
    if (frame_order.emplace(record.frame_id, static_cast<int>(qs.size())).second) {
      frame_ids.push_back(record.frame_id);
      qs.push_back(record.q);
    }
  }
  const std::vector<int> picked = distill_keyframes(qs, config.distill_k);
  std::vector<bool> keep(qs.size(), false);
  for (int idx : picked) keep[static_cast<std::size_t>(idx)] = true;

  std::vector<KeypointFrame> out;
  for (const KeypointFrame& record : records) {
    if (keep[static_cast<std::size_t>(frame_order.at(record.frame_id))]) out.push_back(record);
  }
  write_dataset(out, out_path);
  write_manifest(out_path, config, out.size());
}

void cmd_noise(const PipelineConfig& config, const std::string& in_path,
               const std::string& out_path) {
  validate_config(config);
  const std::vector<KeypointFrame> records = read_dataset(in_path);
  if (records.empty()) throw ValidationError(in_path + ": dataset is empty");
  const std::vector<KeypointFrame> noisy = add_noise(records, config.noise);
  write_dataset(noisy, out_path);
  write_manifest(out_path, config, noisy.size());
}

void cmd_train_lifter(const PipelineConfig& config, const std::string& dataset_path,
                      const std::string& out_path, const std::string& history_path) {
  validate_config(config);
  const std::vector<KeypointFrame> records = read_dataset(dataset_path);
  if (records.empty()) throw ValidationError(dataset_path + ": dataset is empty");
  const int n = static_cast<int>(records[0].pixel_2d.rows());

  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(records.size()), 2 * n);
  Eigen::MatrixXd targets(static_cast<Eigen::Index>(records.size()), 3 * n);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const KeypointFrame& record = records[r];
    if (record.camera_3d.rows() != n) {
      throw ValidationError("record " + std::to_string(r + 1) +
                            " has no 3D targets; training needs ground-truth 3D");
    }
    try {
      inputs.row(static_cast<Eigen::Index>(r)) = lifter_input(record).transpose();
    } catch (const ValidationError& e) {
      throw ValidationError("record " + std::to_string(r + 1) + ": " + e.what());
    }
    targets.row(static_cast<Eigen::Index>(r)) =
        flatten_3d(center_targets(record.camera_3d, 0)).transpose();
  }

  LifterNetwork net = make_lifter(n, 0, config.train_hidden, config.train.seed);
  const TrainHistory history = lifter_train(net, inputs, targets, config.train);

  const std::string provenance = provenance_string(config);
  write_text_file(out_path, serialize_lifter(net, provenance));

  JsonWriter w;
  w.begin_object();
  w.key("train_loss").begin_array();
  for (double v : history.train_loss) w.value(v);
  w.end_array();
  w.key("val_loss").begin_array();
  for (double v : history.val_loss) w.value(v);
  w.end_array();
  w.key("provenance").value(provenance);
  w.end_object();
  const std::string hist_out = history_path.empty() ? out_path + ".history.json" : history_path;
  write_text_file(hist_out, w.str() + "\n");
}

void cmd_recover(const PipelineConfig& config, const std::string& keypoints_path,
                 const std::string& lifter_path, const std::string& out_path,
                 const std::string& diagnostics_path) {
  validate_config(config);
  const KinematicModel model = load_model(config.model_path);
  const int n = model.num_keypoints();

  const std::vector<KeypointFrame> all_records = read_dataset(keypoints_path);
  if (all_records.empty()) throw ValidationError(keypoints_path + ": dataset is empty");
  std::vector<KeypointFrame> records;
  for (const KeypointFrame& record : all_records) {
    if (record.camera_id == config.camera_id) records.push_back(record);
  }
  if (records.empty()) {
    throw ValidationError("no records for camera \"" + config.camera_id + "\" in " +
                          keypoints_path);
  }
  if (records[0].pixel_2d.rows() != n) {
    throw ValidationError("records have " + std::to_string(records[0].pixel_2d.rows()) +
                          " keypoints but the model has " + std::to_string(n));
  }

  LifterNetwork lifter;
  const bool use_lifter = !lifter_path.empty();
  if (use_lifter) {
    lifter = load_lifter(lifter_path);
    if (lifter.n != n) {
      throw ValidationError("lifter keypoint count does not match the model");
    }
  } else {
    for (std::size_t r = 0; r < records.size(); ++r) {
      if (records[r].camera_3d.rows() != n) {
        throw ValidationError("record for frame " + std::to_string(records[r].frame_id) +
                              " has no 3D keypoints and no lifter was given");
      }
    }
  }

  const std::vector<Camera> rig = make_rig(config);
  const Camera& camera = rig_camera(rig, config.camera_id);
  const RigidTransform cam_inverse = camera.extrinsics.inverse();
  const Eigen::VectorXd midrange = 0.5 * (model.lower_limits() + model.upper_limits());

  RecoveredTrajectory raw;
  raw.fps = config.fps;
  raw.joint_names = model.joint_names();

  struct FrameDiag {
    std::int64_t frame_id = 0;
    bool solved = false;
    double ik_residual_rms = -1.0;
    int ik_iterations = 0;
    bool ik_converged = false;
    double pnp_reproj_rms = -1.0;
    int pnp_iterations = 0;
    bool pnp_converged = false;
  };
  std::vector<FrameDiag> diags;

  JointConfiguration prev_q = midrange;
  RigidTransform prev_root;
  bool have_pose = false;
  int failed = 0;

  for (const KeypointFrame& record : records) {
    FrameDiag diag;
    diag.frame_id = record.frame_id;

    Eigen::VectorXd weights = Eigen::VectorXd::Zero(n);
    int usable = 0;
    for (int i = 0; i < n; ++i) {
      if (record.visibility[static_cast<std::size_t>(i)]) {
        weights[i] = 1.0;
        ++usable;
      }
    }
    weights[0] = 1.0;

    TrajectoryFrame frame;
    frame.qpos = prev_q;
    frame.root_pos = prev_root.translation;
    frame.root_rot = prev_root.rotation;
    frame.ik_converged = false;
    frame.pnp_converged = false;

    if (usable >= 4 && (!use_lifter || record.visibility[0])) {
      try {
        Eigen::MatrixX3d targets;
        if (use_lifter) {
          targets = lifter_forward(lifter, lifter_input(record));
        } else {
          // Ground-truth 3D is stored in the camera frame; the solver wants
          // root-relative points in the root frame. Map through the world via
          // the camera extrinsics and the annotated root pose, then center.
          const RigidTransform root_inverse = record.root_pose_world.inverse();
          Eigen::MatrixX3d root_frame(n, 3);
          for (int i = 0; i < n; ++i) {
            const Eigen::Vector3d world =
                cam_inverse.apply(record.camera_3d.row(i).transpose());
            root_frame.row(i) = root_inverse.apply(world).transpose();
          }
          targets = center_targets(root_frame, 0);
        }
        IkProblem ik_problem;
        ik_problem.targets = targets;
        ik_problem.weights = weights;
        ik_problem.q_init = prev_q;
        const IkSolution ik = solve_ik(model, ik_problem, config.ik);

        PnpProblem pnp_problem;
        pnp_problem.local_points = forward_kinematics(model, ik.q_star);
        pnp_problem.pixels = record.pixel_2d;
        pnp_problem.weights = weights;
        pnp_problem.intrinsics = camera.intrinsics;
        if (have_pose) pnp_problem.pose_init = camera.extrinsics.compose(prev_root);
        const PnpSolution pnp = solve_pnp(pnp_problem, config.pnp);

        const RigidTransform root_world = cam_inverse.compose(pnp.cam_from_local);
        frame.qpos = ik.q_star;
        frame.root_pos = root_world.translation;
        frame.root_rot = root_world.rotation.normalized();
        frame.ik_converged = ik.converged;
        frame.pnp_converged = pnp.converged;
        prev_q = ik.q_star;
        prev_root = root_world;
        have_pose = true;

        diag.solved = true;
        diag.ik_residual_rms = ik.residual_rms;
        diag.ik_iterations = ik.iterations;
        diag.ik_converged = ik.converged;
        diag.pnp_reproj_rms = pnp.reproj_rms;
        diag.pnp_iterations = pnp.iterations;
        diag.pnp_converged = pnp.converged;
      } catch (const ValidationError&) {
        diag.solved = false;
      } catch (const NumericError&) {
        diag.solved = false;
      }
    }
    if (!diag.solved) ++failed;
    raw.frames.push_back(std::move(frame));
    diags.push_back(diag);
  }

  const std::vector<RecoveredTrajectory> segments = interpolate_gaps(raw, config.max_gap);
  if (segments.empty()) {
    throw ValidationError("recovery failed on every frame; nothing to export");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].frames.size() > segments[best].frames.size()) best = i;
  }
  const RecoveredTrajectory processed =
      to_egocentric(ema_smooth(segments[best], config.ema_alpha));

  const std::string provenance = provenance_string(config);
  export_gmr(processed, out_path, provenance);

  JsonWriter w;
  w.begin_object();
  w.key("frame_count").value(static_cast<std::uint64_t>(records.size()));
  w.key("failed_count").value(failed);
  int ik_ok = 0, pnp_ok = 0;
  for (const FrameDiag& d : diags) {
    if (d.ik_converged) ++ik_ok;
    if (d.pnp_converged) ++pnp_ok;
  }
  w.key("ik_converged_count").value(ik_ok);
  w.key("pnp_converged_count").value(pnp_ok);
  w.key("segment_count").value(static_cast<std::uint64_t>(segments.size()));
  w.key("segment_lengths").begin_array();
  for (const RecoveredTrajectory& seg : segments) {
    w.value(static_cast<std::uint64_t>(seg.frames.size()));
  }
  w.end_array();
  w.key("exported_segment").value(static_cast<std::uint64_t>(best));
  w.key("heading_fallback").value(processed.heading_fallback);
  w.key("frames").begin_array();
  for (const FrameDiag& d : diags) {
    w.begin_object();
    w.key("frame_id").value(static_cast<std::int64_t>(d.frame_id));
    w.key("solved").value(d.solved);
    w.key("ik_residual_rms").value(d.ik_residual_rms);
    w.key("ik_iterations").value(d.ik_iterations);
    w.key("ik_converged").value(d.ik_converged);
    w.key("pnp_reproj_rms").value(d.pnp_reproj_rms);
    w.key("pnp_iterations").value(d.pnp_iterations);
    w.key("pnp_converged").value(d.pnp_converged);
    w.end_object();
  }
  w.end_array();
  w.key("provenance").value(provenance);
  w.end_object();
  const std::string diag_out =
      diagnostics_path.empty() ? out_path + ".diagnostics.json" : diagnostics_path;
  write_text_file(diag_out, w.str() + "\n");
}

void cmd_eval(const PipelineConfig& config, const std::string& pred_path,
              const std::string& gt_path, const std::string& lifter_path,
              const std::string& out_path) {
  validate_config(config);
  const std::vector<KeypointFrame> pred = read_dataset(pred_path);
  const std::vector<KeypointFrame> gt = read_dataset(gt_path);
  if (gt.empty()) throw ValidationError(gt_path + ": dataset is empty");
  if (pred.size() != gt.size()) {
    throw ValidationError("prediction and ground-truth datasets disagree on record count");
  }
  for (std::size_t r = 0; r < gt.size(); ++r) {
    if (pred[r].frame_id != gt[r].frame_id || pred[r].camera_id != gt[r].camera_id) {
      throw ValidationError("record " + std::to_string(r + 1) +
                            ": prediction and ground truth are not aligned");
    }
    if (pred[r].pixel_2d.rows() != gt[r].pixel_2d.rows()) {
      throw ValidationError("record " + std::to_string(r + 1) + ": keypoint count mismatch");
    }
  }
  const int n = static_cast<int>(gt[0].pixel_2d.rows());

  EvalReport report;
  report.frame_count = static_cast<int>(gt.size());

  // 2D metrics over non-degenerate ground-truth frames.
  std::vector<Eigen::MatrixX2d> pred_px, gt_px;
  std::vector<Eigen::Vector4d> boxes;
  std::vector<std::vector<bool>> vis;
  for (std::size_t r = 0; r < gt.size(); ++r) {
    if (gt[r].degenerate) continue;
    pred_px.push_back(pred[r].pixel_2d);
    gt_px.push_back(gt[r].pixel_2d);
    boxes.push_back(gt[r].bbox);
    vis.push_back(gt[r].visibility);
  }
  if (pred_px.empty()) {
    throw ValidationError("every ground-truth frame is degenerate; nothing to evaluate");
  }
  for (double threshold : {0.05, 0.10, 0.20}) {
    report.pck.emplace_back(threshold, pck(pred_px, gt_px, boxes, vis, threshold));
  }
  report.ap = oks_ap(pred_px, gt_px, boxes, vis);

  // 3D metric: lifter predictions when a lifter is given, else the shared
  // recorded 3D fields, root-aligned.
  std::vector<Eigen::MatrixX3d> pred_3d, gt_3d;
  if (!lifter_path.empty()) {
    const LifterNetwork lifter = load_lifter(lifter_path);
    if (lifter.n != n) {
      throw ValidationError("lifter keypoint count does not match the dataset");
    }
    for (std::size_t r = 0; r < gt.size(); ++r) {
      if (gt[r].camera_3d.rows() != n) {
        throw ValidationError("record " + std::to_string(r + 1) +
                              " has no 3D targets; lifter evaluation needs ground-truth 3D");
      }
      pred_3d.push_back(lifter_forward(lifter, lifter_input(gt[r])));
      gt_3d.push_back(center_targets(gt[r].camera_3d, 0));
    }
  } else {
    const bool camera_space = pred[0].camera_3d.rows() == n && gt[0].camera_3d.rows() == n;
    const bool world_space = pred[0].world_3d.rows() == n && gt[0].world_3d.rows() == n;
    if (!camera_space && !world_space) {
      throw ValidationError(
          "no shared 3D fields between prediction and ground truth; give a lifter or add 3D");
    }
    for (std::size_t r = 0; r < gt.size(); ++r) {
      pred_3d.push_back(camera_space ? pred[r].camera_3d : pred[r].world_3d);
      gt_3d.push_back(camera_space ? gt[r].camera_3d : gt[r].world_3d);
    }
  }
  report.mpjpe_mm = mpjpe_mm(pred_3d, gt_3d, Alignment::kRoot, 0);
  report.per_joint_errors_mm = per_joint_error_mm(pred_3d, gt_3d, Alignment::kRoot, 0);

  write_text_file(out_path, serialize_eval_report(report, provenance_string(config)));
}

void cmd_roundtrip(const PipelineConfig& config, const std::string& lifter_path,
                   const std::string& report_path, const std::string& motion_path) {
  validate_config(config);
  const KinematicModel model = load_model(config.model_path);
  TrajectoryConfig traj;
  traj.frames = config.frames;
  traj.fps = config.fps;
  traj.seed = config.seed;
  const std::vector<JointConfiguration> qs = sample_joint_trajectory(model, traj);
  const std::vector<RigidTransform> roots = sample_root_walk(config.frames, config.fps,
                                                             config.seed);
  const std::vector<Camera> rig = make_rig(config);

  LifterNetwork lifter;
  const bool use_lifter = !lifter_path.empty();
  if (use_lifter) lifter = load_lifter(lifter_path);

  RoundtripOptions options;
  options.camera_id = config.camera_id;
  options.ik = config.ik;
  options.pnp = config.pnp;
  options.ema_alpha = config.ema_alpha;
  options.fps = config.fps;

  const RoundtripReport report = roundtrip_eval(model, rig, qs, roots, config.noise,
                                                use_lifter ? &lifter : nullptr, options);
  const std::string provenance = provenance_string(config);
  write_text_file(report_path, serialize_roundtrip_report(report, provenance));
  if (!motion_path.empty()) export_gmr(report.processed, motion_path, provenance);
}

}  // namespace kinerec
