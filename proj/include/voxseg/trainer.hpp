// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxseg/augment.hpp"
#include "voxseg/config.hpp"
#include "voxseg/halfprec.hpp"
#include "voxseg/losses.hpp"
#include "voxseg/network.hpp"
#include "voxseg/optimizer.hpp"
#include "voxseg/volio.hpp"

namespace voxseg {

struct TrainConfig {
  NetworkConfig net;
  std::uint64_t seed = 0;
  std::int64_t steps = 30000;
  PrecisionLevel precision = PrecisionLevel::kMixedSafe;
  LossConfig loss;
  RAdamConfig optim;
  AugmentParams augment;
  /// Unset: no scaling under FULL, a dynamic 2^16 scale otherwise.
  std::optional<float> loss_scale;
  bool loss_scale_dynamic = true;
  int loss_scale_growth_interval = 2000;
  std::int64_t checkpoint_every = 1000;
  /// Held-out fold in [0, num_folds); -1 trains on everything.
  int fold = -1;
  int num_folds = 4;
  /// Stop after this many validations without a better mean DSC; 0 = off.
  int patience = 0;
  std::int64_t validate_every = 500;
  /// Consecutive steps without a usable update (non-finite loss, or an
  /// overflow skip at loss scale 1) that count as divergence.
  int divergence_window = 100;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;

  /// Builds a config from `key = value` pairs. Unknown keys are rejected.
  static TrainConfig from_map(const config::KeyValues& kv);
  std::string serialize() const;
  void validate() const;
  LossScalerConfig scaler_config() const;
};

struct Sample {
  std::string name;
  Volume image;
  LabelVolume label;
};

/// Reads `manifest.txt` in `data_dir`: one `image label` path pair per line,
/// relative to `data_dir`.
std::vector<Sample> load_dataset(const std::filesystem::path& data_dir, int num_classes);

/// Indices of the training (or held-out) part of a seeded split into
/// `num_folds` near-equal folds. `fold` = -1 puts everything in training.
std::vector<std::size_t> fold_indices(std::size_t count, int fold, int num_folds, std::uint64_t seed,
                                      bool held_out);

struct StepLog {
  std::int64_t step = 0;
  float loss = 0.0f;
  float scale = 1.0f;
  bool skipped = false;
  double wallclock_ms = 0.0;

  /// `step loss scale skipped wallclock_ms`.
  std::string format() const;
};

struct TrainResult {
  Network net;
  std::vector<StepLog> log;
  std::int64_t steps_run = 0;
  bool diverged = false;
  std::string divergence_report;
  bool stopped_early = false;
  /// Mean of the finite losses over the last 100 steps.
  double final_loss = 0.0;
  std::vector<std::filesystem::path> checkpoints;
};

/// Per-step hook, e.g. for progress output.
using StepCallback = std::function<void(const StepLog&)>;

/// Trains on `data` (the fold split applies). Checkpoints and `train.log`
/// go to `cfg.out_dir` when it is set.
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data, const StepCallback& on_step = {});

/// Loads `cfg.data_dir` and trains.
TrainResult train(const TrainConfig& cfg, const StepCallback& on_step = {});

struct InferResult {
  LabelVolume labels;
  double forward_ms = 0.0;
};

/// z-score, forward, per-voxel argmax (ties go to the lowest class).
InferResult infer(const Network& net, const Volume& volume,
                  const PrecisionPolicy& policy = PrecisionPolicy(PrecisionLevel::kFull));

/// Channel argmax of a (1, L, H, W, D) probability tensor.
LabelVolume argmax_labels(const Tensor& probs, const Spacing& spacing = {1.0f, 1.0f, 1.0f});

/// Concentric cubes: label = number of nested cubes containing the voxel,
/// intensity = label plus Gaussian noise of `noise_sigma`. Cube faces sit on
/// even voxel indices; `extent` must leave at least one voxel pair per class.
Sample make_toy_sample(std::int64_t extent, int num_classes, float noise_sigma, std::uint64_t seed);

/// Writes `sample` as image/label files plus a one-line manifest.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);

}  // namespace voxseg
