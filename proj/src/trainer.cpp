// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "voxseg/error.hpp"
#include "voxseg/kernels/kernels.hpp"
#include "voxseg/metrics.hpp"
#include "voxseg/ops.hpp"

namespace voxseg {

// ---------------------------------------------------------------------------
// Config

namespace {

const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys{
      "seed",           "steps",         "precision",          "loss",
      "dice_epsilon",   "log_floor",     "lr",                 "beta1",
      "beta2",          "eps",           "loss_scale",         "loss_scale_dynamic",
      "loss_scale_growth_interval",      "checkpoint_every",   "fold",
      "num_folds",      "patience",      "validate_every",     "divergence_window",
      "data_dir",       "out_dir",       "augment.elastic",    "augment.noise",
      "augment.out_of_bounds",           "elastic.sigma_low",  "elastic.sigma_high",
      "elastic.sigma_in_voxels",         "elastic.alpha",      "noise.sigma_low",
      "noise.sigma_high"};
  return keys;
}

const std::set<std::string>& network_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> out;
    for (const auto& [k, v] : config::parse(NetworkConfig{}.serialize())) out.insert(k);
    return out;
  }();
  return keys;
}

}  // namespace

TrainConfig TrainConfig::from_map(const config::KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (!train_keys().count(k) && !network_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  TrainConfig c;
  c.net = NetworkConfig::from_map(kv);
  auto has = [&kv](const char* k) { return kv.find(k) != kv.end(); };
  auto str = [&kv](const char* k) { return kv.at(k); };
  auto i64 = [&](const char* k, auto& field) {
    if (has(k)) field = static_cast<std::remove_reference_t<decltype(field)>>(config::to_int(k, str(k)));
  };
  auto dbl = [&](const char* k, auto& field) {
    if (has(k)) field = static_cast<std::remove_reference_t<decltype(field)>>(config::to_double(k, str(k)));
  };
  auto flag = [&](const char* k, bool& field) {
    if (has(k)) field = config::to_bool(k, str(k));
  };
  if (has("seed")) c.seed = static_cast<std::uint64_t>(config::to_int("seed", str("seed")));
  i64("steps", c.steps);
  if (has("precision")) c.precision = parse_precision(str("precision"));
  if (has("loss")) c.loss.kind = parse_loss_kind(str("loss"));
  dbl("dice_epsilon", c.loss.dice_epsilon);
  dbl("log_floor", c.loss.log_floor);
  dbl("lr", c.optim.lr);
  dbl("beta1", c.optim.beta1);
  dbl("beta2", c.optim.beta2);
  dbl("eps", c.optim.eps);
  if (has("loss_scale")) c.loss_scale = static_cast<float>(config::to_double("loss_scale", str("loss_scale")));
  flag("loss_scale_dynamic", c.loss_scale_dynamic);
  i64("loss_scale_growth_interval", c.loss_scale_growth_interval);
  i64("checkpoint_every", c.checkpoint_every);
  i64("fold", c.fold);
  i64("num_folds", c.num_folds);
  i64("patience", c.patience);
  i64("validate_every", c.validate_every);
  i64("divergence_window", c.divergence_window);
  if (has("data_dir")) c.data_dir = str("data_dir");
  if (has("out_dir")) c.out_dir = str("out_dir");
  flag("augment.elastic", c.augment.elastic);
  flag("augment.noise", c.augment.noise);
  if (has("augment.out_of_bounds")) {
    const auto v = str("augment.out_of_bounds");
    if (v == "background") {
      c.augment.oob = OutOfBounds::kBackground;
    } else if (v == "clamp") {
      c.augment.oob = OutOfBounds::kClamp;
    } else {
      throw ConfigError("augment.out_of_bounds must be background or clamp, got '" + v + "'");
    }
  }
  dbl("elastic.sigma_low", c.augment.deform.sigma_low);
  dbl("elastic.sigma_high", c.augment.deform.sigma_high);
  flag("elastic.sigma_in_voxels", c.augment.deform.sigma_in_voxels);
  dbl("elastic.alpha", c.augment.deform.alpha);
  dbl("noise.sigma_low", c.augment.noise_params.sigma_low);
  dbl("noise.sigma_high", c.augment.noise_params.sigma_high);
  c.validate();
  return c;
}

std::string TrainConfig::serialize() const {
  std::ostringstream o;
  auto f = [](double v) { return config::format_float(static_cast<float>(v)); };
  o << net.serialize();
  o << "seed = " << seed << "\nsteps = " << steps << "\nprecision = " << precision_name(precision)
    << "\nloss = " << loss_kind_name(loss.kind) << "\ndice_epsilon = " << f(loss.dice_epsilon)
    << "\nlog_floor = " << f(loss.log_floor) << "\nlr = " << optim.lr << "\nbeta1 = " << optim.beta1
    << "\nbeta2 = " << optim.beta2 << "\neps = " << optim.eps << '\n';
  if (loss_scale) o << "loss_scale = " << f(*loss_scale) << '\n';
  o << "loss_scale_dynamic = " << (loss_scale_dynamic ? "true" : "false")
    << "\nloss_scale_growth_interval = " << loss_scale_growth_interval << "\ncheckpoint_every = " << checkpoint_every
    << "\nfold = " << fold << "\nnum_folds = " << num_folds << "\npatience = " << patience
    << "\nvalidate_every = " << validate_every << "\ndivergence_window = " << divergence_window
    << "\naugment.elastic = " << (augment.elastic ? "true" : "false")
    << "\naugment.noise = " << (augment.noise ? "true" : "false")
    << "\naugment.out_of_bounds = " << (augment.oob == OutOfBounds::kClamp ? "clamp" : "background")
    << "\nelastic.sigma_low = " << f(augment.deform.sigma_low) << "\nelastic.sigma_high = " << f(augment.deform.sigma_high)
    << "\nelastic.sigma_in_voxels = " << (augment.deform.sigma_in_voxels ? "true" : "false")
    << "\nelastic.alpha = " << f(augment.deform.alpha) << "\nnoise.sigma_low = " << f(augment.noise_params.sigma_low)
    << "\nnoise.sigma_high = " << f(augment.noise_params.sigma_high) << '\n';
  return o.str();
}

void TrainConfig::validate() const {
  net.validate();
  optim.validate();
  augment.deform.validate();
  augment.noise_params.validate();
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (num_folds < 2) throw ConfigError("num_folds must be >= 2");
  if (fold < -1 || fold >= num_folds) throw ConfigError("fold must be -1 or in [0, num_folds)");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (validate_every < 1) throw ConfigError("validate_every must be >= 1");
  if (divergence_window < 1) throw ConfigError("divergence_window must be >= 1");
  if (!(loss.dice_epsilon > 0.0f) || !(loss.log_floor > 0.0f)) {
    throw ConfigError("dice_epsilon and log_floor must be positive");
  }
  (void)scaler_config();
}

LossScalerConfig TrainConfig::scaler_config() const {
  LossScalerConfig s;
  s.growth_interval = loss_scale_growth_interval;
  s.dynamic = loss_scale_dynamic;
  if (loss_scale) {
    s.initial_scale = *loss_scale;
  } else if (precision == PrecisionLevel::kFull) {
    s.initial_scale = 1.0f;
    s.dynamic = false;
  }
  LossScaler check(s);  // validates the power-of-two scale
  return s;
}

// ---------------------------------------------------------------------------
// Data

std::vector<Sample> load_dataset(const std::filesystem::path& data_dir, int num_classes) {
  const auto manifest = data_dir / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  std::vector<Sample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string image, label, extra;
    if (!(fields >> image)) continue;
    if (image[0] == '#') continue;
    if (!(fields >> label) || (fields >> extra)) {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": expected 'image label'");
    }
    Sample s;
    s.name = image;
    try {
      s.image = load_intensity(data_dir / image);
      s.label = load_labels(data_dir / label, num_classes);
    } catch (const Error& e) {
      throw IoError(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!(s.image.dims() == s.label.dims())) {
      throw ValidationError(manifest.string() + ":" + std::to_string(line_no) + ": image and label dims differ");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError(manifest.string() + " lists no volumes");
  return out;
}

std::vector<std::size_t> fold_indices(std::size_t count, int fold, int num_folds, std::uint64_t seed,
                                      bool held_out) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (fold < 0) return held_out ? std::vector<std::size_t>{} : order;
  std::mt19937_64 rng(derive_seed(seed, 0xF01D));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    // Position i falls in fold floor(i * num_folds / count).
    const auto f = static_cast<int>(i * static_cast<std::size_t>(num_folds) / count);
    if ((f == fold) == held_out) out.push_back(order[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Sample make_toy_sample(std::int64_t extent, int num_classes, float noise_sigma, std::uint64_t seed) {
  // Band widths are whole voxel pairs so every box face lies on the
  // half-resolution grid. The background keeps one pair; the other pairs are
  // shared out with any remainder going to the outer classes.
  const std::int64_t pairs = extent / 4;
  if (num_classes < 2 || pairs < num_classes) {
    throw ValidationError("toy volume of extent " + std::to_string(extent) + " cannot hold " +
                          std::to_string(num_classes) + " nested boxes");
  }
  std::vector<std::int64_t> band(static_cast<std::size_t>(num_classes), 0);  // pairs per class
  band[0] = 1;
  const std::int64_t inner = num_classes - 1;
  for (std::int64_t c = 1; c < num_classes; ++c) {
    band[static_cast<std::size_t>(c)] = (pairs - 1) / inner + (c - 1 < (pairs - 1) % inner ? 1 : 0);
  }
  // Outer half-width (in pairs) of each class's box.
  std::vector<std::int64_t> reach(band.size());
  std::int64_t acc = 0;
  for (std::size_t c = band.size(); c-- > 1;) {
    acc += band[c];
    reach[c] = acc;
  }

  const Dims3 dims{extent, extent, extent};
  std::vector<std::int32_t> labels(static_cast<std::size_t>(dims.voxels()));
  std::vector<float> image(labels.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, noise_sigma > 0.0f ? noise_sigma : 1.0f);
  const std::int64_t half = extent / 2;
  auto ring = [half](std::int64_t i) {
    // 1-based pair index counted outward from the centre.
    const std::int64_t off = i < half ? half - i : i - half + 1;
    return (off + 1) / 2;
  };
  std::size_t v = 0;
  for (std::int64_t i = 0; i < extent; ++i)
    for (std::int64_t j = 0; j < extent; ++j)
      for (std::int64_t k = 0; k < extent; ++k, ++v) {
        const std::int64_t q = std::max({ring(i), ring(j), ring(k)});
        std::int32_t label = 0;
        for (int c = num_classes - 1; c >= 1; --c) {
          if (q <= reach[static_cast<std::size_t>(c)]) {
            label = c;
            break;
          }
        }
        labels[v] = label;
        image[v] = static_cast<float>(label) + (noise_sigma > 0.0f ? noise(rng) : 0.0f);
      }
  return Sample{"toy", Volume(dims, std::move(image)), LabelVolume(dims, std::move(labels), num_classes)};
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = samples.size() == 1 ? samples[i].name : samples[i].name + std::to_string(i);
    save_volume(samples[i].image, dir / (stem + "_image.vvol"));
    save_volume(samples[i].label, dir / (stem + "_label.vvol"));
    manifest << stem << "_image.vvol " << stem << "_label.vvol\n";
  }
}

// ---------------------------------------------------------------------------
// Inference

LabelVolume argmax_labels(const Tensor& probs, const Spacing& spacing) {
  const Shape& s = probs.shape();
  if (s.n != 1) throw ShapeError("argmax_labels: expected batch 1, got " + s.str());
  const std::int64_t vox = s.voxels();
  std::vector<std::int32_t> labels(static_cast<std::size_t>(vox), 0);
  std::vector<float> best(static_cast<std::size_t>(vox));
  const float* p0 = probs.plane(0, 0);
  std::copy(p0, p0 + vox, best.begin());
  for (std::int64_t c = 1; c < s.c; ++c) {
    const float* pc = probs.plane(0, c);
    for (std::int64_t v = 0; v < vox; ++v) {
      if (pc[v] > best[static_cast<std::size_t>(v)]) {
        best[static_cast<std::size_t>(v)] = pc[v];
        labels[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(c);
      }
    }
  }
  const Dims3 dims{s.spatial[0], s.spatial[1], s.spatial[2]};
  return LabelVolume(dims, std::move(labels), static_cast<int>(std::max<std::int64_t>(s.c, 2)), spacing);
}

InferResult infer(const Network& net, const Volume& volume, const PrecisionPolicy& policy) {
  const Tensor x = to_tensor(zscore_normalize(volume));
  NoGradScope no_grad;
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor p = net.forward(x, {policy, nullptr});
  const auto t1 = std::chrono::steady_clock::now();
  InferResult r{argmax_labels(p, volume.spacing()), std::chrono::duration<double, std::milli>(t1 - t0).count()};
  return r;
}

// ---------------------------------------------------------------------------
// Training

std::string StepLog::format() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld %.9g %.9g %s %.3f", static_cast<long long>(step), static_cast<double>(loss),
                static_cast<double>(scale), skipped ? "true" : "false", wallclock_ms);
  return buf;
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%08lld.ckpt", static_cast<long long>(step));
  return dir / name;
}

double validation_dsc(const Network& net, const std::vector<Sample>& data, const std::vector<std::size_t>& idx,
                      const PrecisionPolicy& policy) {
  double total = 0.0;
  for (auto i : idx) {
    const auto pred = infer(net, data[i].image, policy).labels;
    total += evaluate(data[i].label, pred, net.config().num_classes).mean_dsc;
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw ValidationError("train: no training data");
  const std::int64_t min_extent = min_input_extent(cfg.net);
  for (const auto& s : data) {
    const Extent3 e = s.image.dims().extent();
    if (*std::min_element(e.begin(), e.end()) < min_extent) {
      throw ValidationError("train: " + s.name + " has an extent below " + std::to_string(min_extent));
    }
    if (s.label.num_classes() > cfg.net.num_classes) {
      throw ValidationError("train: " + s.name + " uses more classes than the network predicts");
    }
  }
  const auto train_idx = fold_indices(data.size(), cfg.fold, cfg.num_folds, cfg.seed, false);
  const auto val_idx = fold_indices(data.size(), cfg.fold, cfg.num_folds, cfg.seed, true);
  if (train_idx.empty()) throw ValidationError("train: the fold split leaves no training volumes");

  const bool write = !cfg.out_dir.empty();
  std::ofstream log_file;
  if (write) {
    std::filesystem::create_directories(cfg.out_dir);
    log_file.open(cfg.out_dir / "train.log", std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + (cfg.out_dir / "train.log").string());
    std::ofstream(cfg.out_dir / "train.cfg", std::ios::trunc) << cfg.serialize();
  }

  TrainResult result{Network::build(cfg.net, derive_seed(cfg.seed, 1)), {}, 0, false, {}, false, 0.0, {}};
  Network& net = result.net;
  const PrecisionPolicy policy(cfg.precision);
  std::vector<Tensor> params = net.parameter_tensors();
  std::vector<std::size_t> sizes;
  for (const auto& p : params) sizes.push_back(p.values().size());

  MasterWeights masters(params, policy);
  if (policy.fp16_weights()) {
    for (auto& p : params) {
      auto v = p.values();
      kernels::active().fp16_round(v.data(), v.data(), v.size());
    }
  }

  LossScaler scaler(cfg.scaler_config());
  RAdam<float> radam(cfg.optim, sizes);
  RAdam<float, HalfArithmetic> radam_half(cfg.optim, sizes);

  auto run_optimizer = [&]() {
    std::vector<std::span<const float>> grads;
    for (auto& p : params) grads.emplace_back(p.grad());
    std::vector<std::span<float>> targets;
    if (masters.enabled()) {
      for (std::size_t i = 0; i < params.size(); ++i) targets.push_back(masters.master(i));
    } else {
      for (auto& p : params) targets.push_back(p.values());
    }
    if (policy.fp16_optimizer()) {
      radam_half.step(targets, grads);
    } else {
      radam.step(targets, grads);
    }
    masters.sync(params);
  };

  auto save = [&](std::int64_t step) {
    if (!write) return;
    const auto path = checkpoint_path(cfg.out_dir, step);
    save_checkpoint(net, path);
    result.checkpoints.push_back(path);
  };

  int bad_run = 0;
  int nonfinite_losses = 0;
  double best_val = -1.0;
  int stale = 0;
  std::vector<double> recent;

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t step_seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(step));
    std::mt19937_64 pick(step_seed);
    const std::size_t idx =
        train_idx[std::uniform_int_distribution<std::size_t>(0, train_idx.size() - 1)(pick)];
    const Sample& sample = data[idx];

    auto [image, label] = (cfg.augment.elastic || cfg.augment.noise)
                              ? augment_pair(sample.image, sample.label, cfg.augment, derive_seed(step_seed, 7))
                              : std::pair<Volume, LabelVolume>{sample.image, sample.label};
    const Tensor x = to_tensor(zscore_normalize(image));
    const LabelVolume target_labels(label.dims(), std::vector<std::int32_t>(label.data().begin(), label.data().end()),
                                    cfg.net.num_classes, label.spacing());
    const Tensor y = one_hot(target_labels);

    for (auto& p : params) p.drop_grad();
    StepLog entry;
    entry.step = step;
    entry.scale = scaler.scale();
    {
      Tape tape;
      TapeScope scope(tape);
      const Tensor probs = net.forward(x, {policy, nullptr});
      const Tensor loss = policy.cast_output(compute_loss(probs, y, cfg.loss), OpClass::kLoss);
      entry.loss = loss.item();
      tape.backward(scale_loss(loss, scaler));
    }
    for (auto& p : params) p.grad_buffer();  // parameters the loss never reached get zeros
    if (policy.fp16_grads()) {
      for (auto& p : params) {
        auto g = p.grad_buffer();
        kernels::active().fp16_round(g.data(), g.data(), g.size());
      }
    }
    const bool finite = unscale_grads(params, scaler, policy.fp16_optimizer());
    const StepDecision decision = scaler.update(finite);
    entry.skipped = decision == StepDecision::kSkip;
    if (!entry.skipped) run_optimizer();
    for (auto& p : params) p.drop_grad();

    entry.wallclock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    result.steps_run = step;
    if (write) log_file << entry.format() << '\n' << std::flush;
    if (on_step) on_step(entry);

    // A step makes no progress when its loss is non-finite or when its
    // gradients overflow with the scale already at its floor of 1.
    const bool loss_bad = !std::isfinite(entry.loss);
    const bool stuck = entry.skipped && entry.scale <= 1.0f;
    if (!loss_bad && !stuck) {
      bad_run = 0;
      nonfinite_losses = 0;
    } else {
      nonfinite_losses += loss_bad;
      if (++bad_run >= cfg.divergence_window) {
        result.diverged = true;
        char buf[320];
        std::snprintf(buf, sizeof buf,
                      "no usable step for %d consecutive steps (%lld-%lld) under precision %s; "
                      "%d non-finite losses, the rest overflowed at loss scale 1",
                      bad_run, static_cast<long long>(step - bad_run + 1), static_cast<long long>(step),
                      std::string(precision_name(cfg.precision)).c_str(), nonfinite_losses);
        result.divergence_report = buf;
        if (write) std::ofstream(cfg.out_dir / "DIVERGED", std::ios::trunc) << result.divergence_report << '\n';
        break;
      }
    }

    if (step % cfg.checkpoint_every == 0 && step != cfg.steps) save(step);

    if (cfg.patience > 0 && !val_idx.empty() && step % cfg.validate_every == 0) {
      const double score = validation_dsc(net, data, val_idx, policy);
      if (score > best_val) {
        best_val = score;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (!result.diverged) save(result.steps_run);
  if (write && !result.diverged) {
    std::filesystem::copy_file(checkpoint_path(cfg.out_dir, result.steps_run), cfg.out_dir / "final.ckpt",
                               std::filesystem::copy_options::overwrite_existing);
  }

  const std::size_t window = std::min<std::size_t>(100, result.log.size());
  double total = 0.0;
  std::size_t finite_count = 0;
  for (std::size_t i = result.log.size() - window; i < result.log.size(); ++i) {
    if (std::isfinite(result.log[i].loss)) {
      total += result.log[i].loss;
      ++finite_count;
    }
  }
  result.final_loss = finite_count ? total / static_cast<double>(finite_count) : std::nan("");
  return result;
}

TrainResult train(const TrainConfig& cfg, const StepCallback& on_step) {
  if (cfg.data_dir.empty()) throw ConfigError("train: data_dir is not set");
  return train(cfg, load_dataset(cfg.data_dir, cfg.net.num_classes), on_step);
}

}  // namespace voxseg
