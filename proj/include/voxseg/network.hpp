// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxseg/halfprec.hpp"
#include "voxseg/tensor.hpp"

namespace voxseg {

/// Architecture hyperparameters of the multi-resolution network.
struct NetworkConfig {
  int num_classes = 55;
  int in_channels = 1;
  /// Channels of the stem's strided convolution.
  int stem_conv_channels = 32;
  /// Bottleneck inner width; bottleneck output is mid * expansion.
  int bottleneck_mid_channels = 16;
  int bottleneck_expansion = 4;
  /// Channels per resolution branch, highest resolution first.
  std::vector<int> branch_channels{16, 32, 64};
  /// Exchange modules per stage; stage k runs k + 1 branches.
  std::vector<int> stage_modules{1, 2};
  int blocks_per_module = 3;
  /// Width of the first regression convolution; 0 means the concat width.
  int head_channels = 0;
  float norm_eps = 1e-5f;
  /// Accepted for compatibility; instance norm keeps no running statistics.
  float norm_momentum = 0.1f;

  /// Widths 12/24/48 and 24/48/96 of the small and large variants.
  static NetworkConfig small();
  static NetworkConfig large();

  int stem_out_channels() const { return bottleneck_mid_channels * bottleneck_expansion; }
  int concat_channels() const;
  int resolved_head_channels() const { return head_channels > 0 ? head_channels : concat_channels(); }
  int num_stages() const { return static_cast<int>(stage_modules.size()); }
  int num_branches() const { return static_cast<int>(branch_channels.size()); }

  /// Throws ConfigError describing the first inconsistency.
  void validate() const;

  /// Flat `key = value` text, one field per line.
  std::string serialize() const;
  /// Reads fields from a key/value map, leaving absent keys at their defaults.
  static NetworkConfig from_map(const std::map<std::string, std::string>& kv);

  bool operator==(const NetworkConfig&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
};

/// One row of the layer listing (stem, transitions, stages, fusions, ...).
struct LayerRow {
  std::string component;
  /// Per branch: channels and spatial extent.
  std::vector<std::pair<int, Extent3>> branches;
  std::int64_t parameters = 0;
};

/// Branch shapes observed after each component of a forward pass.
struct ForwardTrace {
  std::vector<std::pair<std::string, std::vector<Shape>>> rows;
};

struct ForwardOptions {
  PrecisionPolicy policy{};
  ForwardTrace* trace = nullptr;
};

class Network {
 public:
  /// Builds the network and initializes its parameters from `seed`:
  /// fan-in scaled normal convolution weights, unit norm gains, zero norm
  /// shifts and zero biases.
  static Network build(const NetworkConfig& config, std::uint64_t seed);

  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  ~Network();

  const NetworkConfig& config() const;

  /// Trainable parameters in construction order.
  std::vector<Parameter>& parameters();
  const std::vector<Parameter>& parameters() const;
  std::vector<Tensor> parameter_tensors() const;

  /// (N, in_channels, H, W, D) -> (N, num_classes, H, W, D) probabilities.
  Tensor forward(const Tensor& x, const ForwardOptions& options = {}) const;

  /// Layer listing with analytic branch extents for an input of `input` voxels.
  std::vector<LayerRow> describe(const Extent3& input) const;

  std::int64_t count_parameters() const;

 private:
  struct Impl;
  explicit Network(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

Network build_network(const NetworkConfig& config, std::uint64_t seed);

std::int64_t count_parameters(const Network& net);
std::int64_t count_parameters(const std::vector<Parameter>& params);

/// Smallest spatial extent forward accepts: 2^branches, the downsampling
/// factor of the coarsest branch (8 for the default three branches).
std::int64_t min_input_extent(const NetworkConfig& config);

/// Extent of branch `branch` (0 = half resolution) for an input extent.
std::int64_t branch_extent(std::int64_t input_extent, int branch);

/// Checkpoint: "VXCKPT1\n", u32 config length, config text, u32 parameter
/// count, then per parameter u32 name length, name, u32 rank, u32 dims[rank],
/// little-endian f32 payload.
void save_checkpoint(const Network& net, const std::filesystem::path& path);

/// Restores a network. When `expected` is given, a differing stored config is
/// a CheckpointError.
Network load_checkpoint(const std::filesystem::path& path, const NetworkConfig* expected = nullptr);

}  // namespace voxseg
