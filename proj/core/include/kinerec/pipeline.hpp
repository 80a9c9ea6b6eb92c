#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinerec/camera_geometry.hpp"
#include "kinerec/dataset_synth.hpp"
#include "kinerec/ik_solver.hpp"
#include "kinerec/lifting.hpp"
#include "kinerec/pnp_align.hpp"

namespace kinerec {

/// Flat, fully-enumerated batch configuration. Every field maps to one dotted
/// key (e.g. "rig.radius", "ik.tol_rms"); parse_config and apply_override
/// reject keys outside that set by name.
struct PipelineConfig {
  std::string model_path;
  std::uint64_t seed = 0;
  double fps = 30.0;
  int frames = 100;        ///< synthetic trajectory length for synth/roundtrip
  RigConfig rig;
  int distill_k = 50;
  NoiseSpec noise;
  TrainConfig train;
  int train_hidden = 256;  ///< lifter hidden width
  IkOptions ik;
  PnpOptions pnp;
  double ema_alpha = 0.3;
  std::string camera_id = "side_0";  ///< recovery view for recover/roundtrip
  int max_gap = 5;                   ///< interpolate_gaps limit, frames
};

PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);

/// Applies one "dotted.key=value" override; the value is parsed by the key's
/// declared type. Unknown keys and malformed values throw ValidationError.
void apply_override(PipelineConfig& config, const std::string& assignment);

/// Canonical single-line JSON of the full effective configuration (every key,
/// fixed order). Identical configurations serialize to identical bytes.
std::string serialize_config(const PipelineConfig& config);

/// FNV-1a 64 hash of serialize_config, as 16 lowercase hex digits.
std::string config_hash_hex(const PipelineConfig& config);

/// "<tool> <version> config=<hash>": embedded into every output file.
std::string provenance_string(const PipelineConfig& config);

/// The hemispherical rig described by the configuration.
std::vector<Camera> make_rig(const PipelineConfig& config);

/// Renders the configured synthetic trajectory against the rig and writes the
/// dataset plus a "<out>.manifest.json" sidecar (record count, seed, config
/// hash, dataset hash, tool version).
void cmd_synth(const PipelineConfig& config, const std::string& out_path);

/// Farthest-point keyframe distillation in joint space: keeps the distill_k
/// most diverse frames (all of their camera views), preserving record order.
void cmd_distill(const PipelineConfig& config, const std::string& in_path,
                 const std::string& out_path);

/// Applies the configured detector-noise model to an existing dataset.
void cmd_noise(const PipelineConfig& config, const std::string& in_path,
               const std::string& out_path);

/// Trains the 2D->3D lifter on a dataset with 3D targets; writes the network
/// JSON and a loss-history JSON ("" derives "<out>.history.json").
void cmd_train_lifter(const PipelineConfig& config, const std::string& dataset_path,
                      const std::string& out_path, const std::string& history_path = "");

/// Recovers a motion file from a single-camera 2D keypoint stream: lift (or
/// take recorded camera-frame 3D when no lifter is given) -> center -> IK ->
/// PnP -> gap repair -> EMA -> egocentric; exports the longest surviving
/// segment plus per-frame diagnostics ("" derives "<out>.diagnostics.json").
void cmd_recover(const PipelineConfig& config, const std::string& keypoints_path,
                 const std::string& lifter_path, const std::string& out_path,
                 const std::string& diagnostics_path = "");

/// Compares a prediction dataset against ground truth (2D PCK/AP always; 3D
/// MPJPE from the shared 3D fields, or from the lifter's predictions on the
/// ground-truth 2D when a lifter is given) and writes the report JSON.
void cmd_eval(const PipelineConfig& config, const std::string& pred_path,
              const std::string& gt_path, const std::string& lifter_path,
              const std::string& out_path);

/// End-to-end synthetic round trip per the configuration; writes the report
/// JSON and, when motion_path is non-empty, the processed motion file.
void cmd_roundtrip(const PipelineConfig& config, const std::string& lifter_path,
                   const std::string& report_path, const std::string& motion_path = "");

}  // namespace kinerec
