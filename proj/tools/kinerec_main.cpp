// kinerec command-line front end: deterministic batch driver for the
// synthesis -> distill -> noise -> train -> recover -> eval pipeline.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/pipeline.hpp"
#include "kinerec/version.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::vector<std::string> overrides;
  int threads = 1;
};

kinerec::PipelineConfig build_config(const CliState& state) {
  kinerec::PipelineConfig config;
  if (!state.config_path.empty()) config = kinerec::load_config(state.config_path);
  for (const std::string& assignment : state.overrides) {
    kinerec::apply_override(config, assignment);
  }
  if (state.threads < 1) {
    throw kinerec::ValidationError("--threads must be at least 1");
  }
  // The pipeline is single-threaded by construction, so results are identical
  // for every thread cap; the option exists to bound, never to change, work.
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinerec: pixel-to-physics humanoid motion recovery toolkit"};
  app.set_version_flag("--version",
                       std::string(kinerec::kToolName) + " " + kinerec::kToolVersion);
  app.require_subcommand(1);

  CliState state;
  app.add_option("--config", state.config_path, "JSON configuration file");
  app.add_option("--set", state.overrides,
                 "Override one configuration key, as dotted.key=value (repeatable)");
  app.add_option("--threads", state.threads, "Worker thread cap (results are identical "
                                             "for every value)");

  std::string out_path, in_path, gt_path, lifter_path, history_path, diagnostics_path,
      motion_path, report_path;

  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic keypoint dataset");
  synth->fallthrough();
  synth->add_option("--out", out_path, "Output dataset (JSON lines)")->required();

  CLI::App* distill = app.add_subcommand("distill", "Keep the most diverse keyframes");
  distill->fallthrough();
  distill->add_option("--in", in_path, "Input dataset")->required();
  distill->add_option("--out", out_path, "Output dataset")->required();

  CLI::App* noise = app.add_subcommand("noise", "Corrupt a dataset with detector noise");
  noise->fallthrough();
  noise->add_option("--in", in_path, "Input dataset")->required();
  noise->add_option("--out", out_path, "Output dataset")->required();

  CLI::App* train = app.add_subcommand("train-lifter", "Train the 2D-to-3D lifting network");
  train->fallthrough();
  train->add_option("--data", in_path, "Training dataset with 3D targets")->required();
  train->add_option("--out", out_path, "Output lifter weights (JSON)")->required();
  train->add_option("--history", history_path, "Loss curve output (default <out>.history.json)");

  CLI::App* recover = app.add_subcommand("recover", "Recover a motion file from keypoints");
  recover->fallthrough();
  recover->add_option("--keypoints", in_path, "Keypoint dataset (JSON lines)")->required();
  recover->add_option("--out", out_path, "Output motion file (JSON)")->required();
  recover->add_option("--lifter", lifter_path, "Lifter weights; omitted means the records "
                                               "must carry camera-frame 3D");
  recover->add_option("--diagnostics", diagnostics_path,
                      "Per-frame solver diagnostics (default <out>.diagnostics.json)");

  CLI::App* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->fallthrough();
  eval->add_option("--pred", in_path, "Predicted keypoint dataset")->required();
  eval->add_option("--gt", gt_path, "Ground-truth keypoint dataset")->required();
  eval->add_option("--out", out_path, "Metric report output (JSON)")->required();
  eval->add_option("--lifter", lifter_path, "Score this lifter's 3D instead of recorded 3D");

  CLI::App* roundtrip = app.add_subcommand("roundtrip", "Simulate, corrupt, and re-recover "
                                                        "one trajectory end to end");
  roundtrip->fallthrough();
  roundtrip->add_option("--report", report_path, "Roundtrip report output (JSON)")->required();
  roundtrip->add_option("--lifter", lifter_path, "Use this lifter for 3D targets instead of "
                                                 "ground-truth backprojection");
  roundtrip->add_option("--motion", motion_path, "Also export the processed motion file");

  CLI11_PARSE(app, argc, argv);

  const CLI::App* active = app.get_subcommands().front();
  const std::string stage = active->get_name();
  try {
    const kinerec::PipelineConfig config = build_config(state);
    if (active == synth) {
      kinerec::cmd_synth(config, out_path);
    } else if (active == distill) {
      kinerec::cmd_distill(config, in_path, out_path);
    } else if (active == noise) {
      kinerec::cmd_noise(config, in_path, out_path);
    } else if (active == train) {
      kinerec::cmd_train_lifter(config, in_path, out_path, history_path);
    } else if (active == recover) {
      kinerec::cmd_recover(config, in_path, lifter_path, out_path, diagnostics_path);
    } else if (active == eval) {
      kinerec::cmd_eval(config, in_path, gt_path, lifter_path, out_path);
    } else if (active == roundtrip) {
      kinerec::cmd_roundtrip(config, lifter_path, report_path, motion_path);
    }
  } catch (const kinerec::ValidationError& e) {
    std::cerr << "error: " << stage << ": " << e.what() << "\n";
    return 1;
  } catch (const kinerec::NumericError& e) {
    std::cerr << "error: " << stage << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << stage << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
