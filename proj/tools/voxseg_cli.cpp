// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train, infer, evaluate, augment, inspect, synth.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxseg/augment.hpp"
#include "voxseg/config.hpp"
#include "voxseg/error.hpp"
#include "voxseg/metrics.hpp"
#include "voxseg/network.hpp"
#include "voxseg/trainer.hpp"
#include "voxseg/volio.hpp"

namespace {

using namespace voxseg;

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

// Flag values that override the config file, keyed like the file.
struct Overrides {
  config::KeyValues values;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

config::KeyValues load_config(const std::string& path, const config::KeyValues& overrides) {
  config::KeyValues kv;
  if (!path.empty()) kv = config::read_file(path);
  config::merge_into(kv, overrides);
  return kv;
}

std::string human_count(std::int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fM", static_cast<double>(n) / 1e6);
  return buf;
}

std::string extent_str(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

int run_train(const std::string& config_path, const Overrides& ov, bool quiet) {
  const TrainConfig cfg = TrainConfig::from_map(load_config(config_path, ov.values));
  if (cfg.out_dir.empty()) throw ConfigError("train: --out-dir (or out_dir) is required");
  const std::int64_t every = std::max<std::int64_t>(1, cfg.steps / 20);
  const TrainResult r = train(cfg, [&](const StepLog& s) {
    if (!quiet && (s.step % every == 0 || s.step == 1)) std::cout << s.format() << '\n' << std::flush;
  });
  if (r.diverged) {
    std::cerr << "error: divergence: " << r.divergence_report << '\n';
    return kExitDiverged;
  }
  std::cout << "steps " << r.steps_run << (r.stopped_early ? " (early stop)" : "") << "\nfinal_loss "
            << r.final_loss << "\ncheckpoint " << (cfg.out_dir / "final.ckpt").string() << '\n';
  return 0;
}

int run_infer(const std::string& checkpoint, const std::string& input, const std::string& output,
              const std::string& precision) {
  const Network net = load_checkpoint(checkpoint);
  const Volume v = load_intensity(input);
  const InferResult r = infer(net, v, PrecisionPolicy(parse_precision(precision)));
  save_volume(r.labels, output);
  std::cout << "dims " << extent_str(v.dims().extent()) << "\nforward_ms " << r.forward_ms << '\n';
  return 0;
}

int run_evaluate(const std::string& pred_path, const std::string& truth_path, int classes) {
  const LabelVolume truth = load_labels(truth_path);
  const LabelVolume pred = load_labels(pred_path);
  const int l = classes > 0 ? classes : std::max(truth.num_classes(), pred.num_classes());
  std::cout << evaluate(truth, pred, l).format();
  return 0;
}

int run_augment(const std::string& config_path, const Overrides& ov, const std::string& image,
                const std::string& label, const std::string& out_image, const std::string& out_label) {
  const TrainConfig cfg = TrainConfig::from_map(load_config(config_path, ov.values));
  const Volume x = load_intensity(image);
  const LabelVolume y = label.empty() ? LabelVolume(x.dims(), std::vector<std::int32_t>(
                                                                  static_cast<std::size_t>(x.dims().voxels()), 0),
                                                    2, x.spacing())
                                      : load_labels(label);
  const auto [ax, ay] = augment_pair(x, y, cfg.augment, cfg.seed);
  save_volume(ax, out_image);
  if (!out_label.empty()) save_volume(ay, out_label);
  return 0;
}

int run_inspect(const std::string& config_path, const Overrides& ov, const std::vector<std::int64_t>& dims) {
  const TrainConfig cfg = TrainConfig::from_map(load_config(config_path, ov.values));
  const Extent3 input{dims[0], dims[1], dims[2]};
  const Network net = build_network(cfg.net, 0);
  std::printf("%-14s %-40s %12s\n", "component", "branches (channels @ extent)", "params");
  std::printf("%-14s %-40s %12s\n", "Input", ("1 @ " + extent_str(input)).c_str(), "0");
  for (const auto& row : net.describe(input)) {
    std::string br;
    for (const auto& [c, e] : row.branches) {
      if (!br.empty()) br += ", ";
      br += std::to_string(c) + " @ " + extent_str(e);
    }
    std::printf("%-14s %-40s %12lld\n", row.component.c_str(), br.c_str(), static_cast<long long>(row.parameters));
  }
  const std::int64_t total = net.count_parameters();
  std::printf("total_params %lld (%s)\n", static_cast<long long>(total), human_count(total).c_str());
  return 0;
}

int run_synth(const std::string& out_dir, std::int64_t extent, int classes, float noise, std::uint64_t seed) {
  write_dataset(out_dir, {make_toy_sample(extent, classes, noise, seed)});
  std::cout << "wrote " << out_dir << "/manifest.txt\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-volume 3D segmentation engine"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  Overrides train_ov;
  auto* train_cmd = app.add_subcommand("train", "Train a network");
  train_cmd->add_option("--config", config_path, "Flat key = value config file");
  train_ov.add(train_cmd, "--data-dir", "data_dir", "Directory holding manifest.txt");
  train_ov.add(train_cmd, "--out-dir", "out_dir", "Checkpoint and log directory");
  train_ov.add(train_cmd, "--seed", "seed", "Random seed");
  train_ov.add(train_cmd, "--precision", "precision", "o0 | o1 | o2 | o3");
  train_ov.add(train_cmd, "--loss", "loss", "ce | dice | combined");
  train_ov.add(train_cmd, "--steps", "steps", "Optimizer steps");
  train_ov.add(train_cmd, "--fold", "fold", "Held-out fold, -1 for none");
  train_ov.add(train_cmd, "--patience", "patience", "Early-stopping patience in validations, 0 = off");
  train_ov.add(train_cmd, "--lr", "lr", "Learning rate");
  train_cmd->add_flag("--quiet", quiet, "Suppress progress lines");

  std::string checkpoint, input, output, precision = "o0";
  auto* infer_cmd = app.add_subcommand("infer", "Segment a volume");
  infer_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--input", input, "Intensity volume (VVOL or NIfTI)")->required();
  infer_cmd->add_option("--output", output, "Label volume to write")->required();
  infer_cmd->add_option("--precision", precision, "o0 | o1 | o2 | o3");

  std::string pred_path, truth_path;
  int classes = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Per-class DSC and HD");
  eval_cmd->add_option("--pred", pred_path, "Predicted labels")->required();
  eval_cmd->add_option("--truth", truth_path, "Reference labels")->required();
  eval_cmd->add_option("--classes", classes, "Number of classes including background (default: inferred)");

  std::string aug_config, aug_image, aug_label, aug_out_image, aug_out_label;
  Overrides aug_ov;
  auto* aug_cmd = app.add_subcommand("augment", "Elastic deformation and noise");
  aug_cmd->add_option("--config", aug_config, "Config file with elastic.* / noise.* keys");
  aug_cmd->add_option("--image", aug_image, "Intensity volume")->required();
  aug_cmd->add_option("--label", aug_label, "Label volume");
  aug_cmd->add_option("--out-image", aug_out_image, "Augmented intensities")->required();
  aug_cmd->add_option("--out-label", aug_out_label, "Augmented labels");
  aug_ov.add(aug_cmd, "--seed", "seed", "Random seed");
  aug_ov.add(aug_cmd, "--alpha", "elastic.alpha", "Displacement scale in voxels");
  aug_ov.add(aug_cmd, "--elastic", "augment.elastic", "true | false");
  aug_ov.add(aug_cmd, "--noise", "augment.noise", "true | false");

  std::string inspect_config;
  Overrides inspect_ov;
  std::vector<std::int64_t> dims{181, 217, 181};
  auto* inspect_cmd = app.add_subcommand("inspect", "Layer listing and parameter count");
  inspect_cmd->add_option("--config", inspect_config, "Config file");
  inspect_cmd->add_option("--dims", dims, "Input extent H W D")->expected(3);
  inspect_ov.add(inspect_cmd, "--classes", "num_classes", "Output classes");
  inspect_ov.add(inspect_cmd, "--branch-channels", "branch_channels", "Comma separated widths");

  std::string synth_dir;
  std::int64_t synth_extent = 24;
  int synth_classes = 4;
  float synth_noise = 0.1f;
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Write the concentric-box toy dataset");
  synth_cmd->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--extent", synth_extent, "Cube edge in voxels");
  synth_cmd->add_option("--classes", synth_classes, "Classes including background");
  synth_cmd->add_option("--noise", synth_noise, "Intensity noise sigma");
  synth_cmd->add_option("--seed", synth_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(config_path, train_ov, quiet);
    if (*infer_cmd) return run_infer(checkpoint, input, output, precision);
    if (*eval_cmd) return run_evaluate(pred_path, truth_path, classes);
    if (*aug_cmd) return run_augment(aug_config, aug_ov, aug_image, aug_label, aug_out_image, aug_out_label);
    if (*inspect_cmd) return run_inspect(inspect_config, inspect_ov, dims);
    if (*synth_cmd) return run_synth(synth_dir, synth_extent, synth_classes, synth_noise, synth_seed);
  } catch (const voxseg::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}
