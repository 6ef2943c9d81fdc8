// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/network.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "voxseg/config.hpp"
#include "voxseg/error.hpp"
#include "voxseg/ops.hpp"

namespace voxseg {

// ---------------------------------------------------------------------------
// NetworkConfig

NetworkConfig NetworkConfig::small() {
  NetworkConfig c;
  c.branch_channels = {12, 24, 48};
  return c;
}

NetworkConfig NetworkConfig::large() {
  NetworkConfig c;
  c.branch_channels = {24, 48, 96};
  return c;
}

int NetworkConfig::concat_channels() const {
  return std::accumulate(branch_channels.begin(), branch_channels.end(), 0);
}

void NetworkConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("network config: " + what);
  };
  require(num_classes >= 2, "num_classes must be >= 2");
  require(in_channels >= 1, "in_channels must be >= 1");
  require(stem_conv_channels >= 1, "stem_conv_channels must be >= 1");
  require(bottleneck_mid_channels >= 1, "bottleneck_mid_channels must be >= 1");
  require(bottleneck_expansion >= 1, "bottleneck_expansion must be >= 1");
  require(!stage_modules.empty(), "at least one stage is required");
  require(branch_channels.size() == stage_modules.size() + 1,
          "stage k runs k + 1 branches, so " + std::to_string(stage_modules.size()) + " stages need " +
              std::to_string(stage_modules.size() + 1) + " branch widths, got " +
              std::to_string(branch_channels.size()));
  for (int c : branch_channels) require(c >= 1, "branch channels must be >= 1");
  for (int m : stage_modules) require(m >= 1, "every stage needs at least one module");
  require(blocks_per_module >= 1, "blocks_per_module must be >= 1");
  require(head_channels >= 0, "head_channels must be >= 0");
  require(norm_eps > 0.0f, "norm_eps must be positive");
}

std::string NetworkConfig::serialize() const {
  std::string out;
  auto line = [&out](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  line("num_classes", std::to_string(num_classes));
  line("in_channels", std::to_string(in_channels));
  line("stem_conv_channels", std::to_string(stem_conv_channels));
  line("bottleneck_mid_channels", std::to_string(bottleneck_mid_channels));
  line("bottleneck_expansion", std::to_string(bottleneck_expansion));
  line("branch_channels", config::format_int_list(branch_channels));
  line("stage_modules", config::format_int_list(stage_modules));
  line("blocks_per_module", std::to_string(blocks_per_module));
  line("head_channels", std::to_string(head_channels));
  line("norm_eps", config::format_float(norm_eps));
  line("norm_momentum", config::format_float(norm_momentum));
  return out;
}

NetworkConfig NetworkConfig::from_map(const std::map<std::string, std::string>& kv) {
  NetworkConfig c;
  auto get_int = [&kv](const char* key, int& field) {
    if (auto it = kv.find(key); it != kv.end()) field = static_cast<int>(config::to_int(key, it->second));
  };
  auto get_float = [&kv](const char* key, float& field) {
    if (auto it = kv.find(key); it != kv.end()) field = static_cast<float>(config::to_double(key, it->second));
  };
  auto get_list = [&kv](const char* key, std::vector<int>& field) {
    if (auto it = kv.find(key); it != kv.end()) field = config::to_int_list(key, it->second);
  };
  get_int("num_classes", c.num_classes);
  get_int("in_channels", c.in_channels);
  get_int("stem_conv_channels", c.stem_conv_channels);
  get_int("bottleneck_mid_channels", c.bottleneck_mid_channels);
  get_int("bottleneck_expansion", c.bottleneck_expansion);
  get_list("branch_channels", c.branch_channels);
  get_list("stage_modules", c.stage_modules);
  get_int("blocks_per_module", c.blocks_per_module);
  get_int("head_channels", c.head_channels);
  get_float("norm_eps", c.norm_eps);
  get_float("norm_momentum", c.norm_momentum);
  return c;
}

std::int64_t branch_extent(std::int64_t input_extent, int branch) {
  std::int64_t e = input_extent;
  for (int b = 0; b <= branch; ++b) e = conv_output_extent(e, 3, 2, 1);
  return e;
}

std::int64_t min_input_extent(const NetworkConfig& config) {
  return std::int64_t{1} << config.num_branches();
}

// ---------------------------------------------------------------------------
// Layers

namespace {

struct Conv {
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int padding = 0;
};

struct ConvNorm {
  Conv conv;
  Tensor gamma;
  Tensor beta;
};

// Plain residual block or bottleneck: body convs with ReLU between them,
// then the sum with the identity or consistent path, then ReLU.
struct Block {
  std::vector<ConvNorm> body;
  std::optional<ConvNorm> shortcut;
};

// Contribution of one source branch to one target branch in a fusion layer.
struct FusePath {
  enum class Kind { kIdentity, kUp, kDown } kind = Kind::kIdentity;
  std::vector<ConvNorm> convs;
};

struct ExchangeModule {
  std::vector<std::vector<Block>> blocks;      // [branch][block]
  std::vector<std::vector<FusePath>> fusion;  // [target][source]
};

struct Transition {
  std::vector<ConvNorm> convs;  // one per output branch
};

class Builder {
 public:
  Builder(std::vector<Parameter>& params, std::vector<std::pair<std::string, std::int64_t>>& rows,
          std::uint64_t seed)
      : params_(params), rows_(rows), rng_(seed) {}

  void begin_row(const std::string& component) { rows_.emplace_back(component, 0); }

  Conv conv(const std::string& name, int cin, int cout, int k, int stride, bool with_bias) {
    Conv c;
    c.stride = stride;
    c.padding = k / 2;
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k * k));
    std::normal_distribution<float> dist(0.0f, static_cast<float>(std));
    Tensor w(Shape{cout, cin, {k, k, k}});
    for (float& v : w.values()) v = dist(rng_);
    c.weight = add_param(name + ".weight", w);
    if (with_bias) c.bias = add_param(name + ".bias", Tensor(Shape{1, cout, {1, 1, 1}}, 0.0f));
    return c;
  }

  ConvNorm conv_norm(const std::string& name, int cin, int cout, int k, int stride) {
    ConvNorm cn;
    cn.conv = conv(name + ".conv", cin, cout, k, stride, false);
    norm(name + ".norm", cout, cn.gamma, cn.beta);
    return cn;
  }

  void norm(const std::string& name, int c, Tensor& gamma, Tensor& beta) {
    gamma = add_param(name + ".gamma", Tensor(Shape{1, c, {1, 1, 1}}, 1.0f));
    beta = add_param(name + ".beta", Tensor(Shape{1, c, {1, 1, 1}}, 0.0f));
  }

  Block basic(const std::string& name, int cin, int cout) {
    Block b;
    b.body.push_back(conv_norm(name + ".conv0", cin, cout, 3, 1));
    b.body.push_back(conv_norm(name + ".conv1", cout, cout, 3, 1));
    if (cin != cout) b.shortcut = conv_norm(name + ".shortcut", cin, cout, 1, 1);
    return b;
  }

  Block bottleneck(const std::string& name, int cin, int mid, int cout) {
    Block b;
    b.body.push_back(conv_norm(name + ".conv0", cin, mid, 1, 1));
    b.body.push_back(conv_norm(name + ".conv1", mid, mid, 3, 1));
    b.body.push_back(conv_norm(name + ".conv2", mid, cout, 1, 1));
    if (cin != cout) b.shortcut = conv_norm(name + ".shortcut", cin, cout, 1, 1);
    return b;
  }

 private:
  Tensor add_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
    rows_.back().second += t.numel();
    return t;
  }

  std::vector<Parameter>& params_;
  std::vector<std::pair<std::string, std::int64_t>>& rows_;
  std::mt19937_64 rng_;
};

std::string stage_label(int stage, int module, int modules) {
  std::string s = std::to_string(stage + 1);
  if (modules > 1) s += "." + std::to_string(module + 1);
  return s;
}

}  // namespace

struct Network::Impl {
  NetworkConfig config;
  std::vector<Parameter> params;
  // Parameter count per listing row, in listing order.
  std::vector<std::pair<std::string, std::int64_t>> rows;

  ConvNorm stem_conv;
  std::vector<Block> stem_blocks;
  std::vector<Transition> transitions;             // [stage]
  std::vector<std::vector<ExchangeModule>> stages;  // [stage][module]
  ConvNorm head_hidden;
  Conv head_out;
};

Network::Network(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;
Network::~Network() = default;

Network Network::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  auto impl = std::make_unique<Impl>();
  impl->config = config;
  Builder b(impl->params, impl->rows, seed);
  const auto& ch = config.branch_channels;

  b.begin_row("Stem");
  impl->stem_conv = b.conv_norm("stem.conv", config.in_channels, config.stem_conv_channels, 3, 2);
  const int stem_out = config.stem_out_channels();
  int cin = config.stem_conv_channels;
  for (int i = 0; i < 2; ++i) {
    impl->stem_blocks.push_back(
        b.bottleneck("stem.bottleneck" + std::to_string(i), cin, config.bottleneck_mid_channels, stem_out));
    cin = stem_out;
  }

  std::vector<int> current{stem_out};
  for (int s = 0; s < config.num_stages(); ++s) {
    const std::string tname = "transition" + std::to_string(s + 1);
    b.begin_row("Transition " + std::to_string(s + 1));
    Transition t;
    const int nb = s + 2;
    for (int br = 0; br < nb; ++br) {
      const bool added = br == nb - 1;
      const int src = added ? current.back() : current[static_cast<std::size_t>(br)];
      t.convs.push_back(b.conv_norm(tname + ".branch" + std::to_string(br), src, ch[static_cast<std::size_t>(br)], 3,
                                    added ? 2 : 1));
    }
    impl->transitions.push_back(std::move(t));
    current.assign(ch.begin(), ch.begin() + nb);

    std::vector<ExchangeModule> modules;
    const int nm = config.stage_modules[static_cast<std::size_t>(s)];
    for (int m = 0; m < nm; ++m) {
      const std::string label = stage_label(s, m, nm);
      const std::string prefix = "stage" + std::to_string(s + 1) + ".module" + std::to_string(m);
      ExchangeModule mod;
      b.begin_row("Stage " + label);
      for (int br = 0; br < nb; ++br) {
        const int c = ch[static_cast<std::size_t>(br)];
        std::vector<Block> blocks;
        for (int k = 0; k < config.blocks_per_module; ++k) {
          blocks.push_back(b.basic(prefix + ".branch" + std::to_string(br) + ".block" + std::to_string(k), c, c));
        }
        mod.blocks.push_back(std::move(blocks));
      }
      b.begin_row("Fusion " + label);
      for (int ti = 0; ti < nb; ++ti) {
        std::vector<FusePath> row;
        for (int sj = 0; sj < nb; ++sj) {
          FusePath p;
          const std::string pname = prefix + ".fusion.to" + std::to_string(ti) + ".from" + std::to_string(sj);
          const int cs = ch[static_cast<std::size_t>(sj)];
          const int ct = ch[static_cast<std::size_t>(ti)];
          if (sj > ti) {
            p.kind = FusePath::Kind::kUp;
            p.convs.push_back(b.conv_norm(pname, cs, ct, 1, 1));
          } else if (sj < ti) {
            p.kind = FusePath::Kind::kDown;
            for (int step = 0; step < ti - sj; ++step) {
              const bool last = step == ti - sj - 1;
              p.convs.push_back(b.conv_norm(pname + ".down" + std::to_string(step), cs, last ? ct : cs, 3, 2));
            }
          }
          row.push_back(std::move(p));
        }
        mod.fusion.push_back(std::move(row));
      }
      modules.push_back(std::move(mod));
    }
    impl->stages.push_back(std::move(modules));
  }

  b.begin_row("Concatenation");
  b.begin_row("Regression");
  const int hidden = config.resolved_head_channels();
  impl->head_hidden.conv = b.conv("head.conv0", config.concat_channels(), hidden, 1, 1, true);
  b.norm("head.norm0", hidden, impl->head_hidden.gamma, impl->head_hidden.beta);
  impl->head_out = b.conv("head.conv1", hidden, config.num_classes, 1, 1, true);

  return Network(std::move(impl));
}

Network build_network(const NetworkConfig& config, std::uint64_t seed) { return Network::build(config, seed); }

const NetworkConfig& Network::config() const { return impl_->config; }
std::vector<Parameter>& Network::parameters() { return impl_->params; }
const std::vector<Parameter>& Network::parameters() const { return impl_->params; }

std::vector<Tensor> Network::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(impl_->params.size());
  for (const auto& p : impl_->params) out.push_back(p.value);
  return out;
}

std::int64_t count_parameters(const std::vector<Parameter>& params) {
  std::int64_t total = 0;
  for (const auto& p : params) total += p.value.numel();
  return total;
}

std::int64_t Network::count_parameters() const { return voxseg::count_parameters(impl_->params); }
std::int64_t count_parameters(const Network& net) { return net.count_parameters(); }

// ---------------------------------------------------------------------------
// Forward

namespace {

class Runner {
 public:
  Runner(const PrecisionPolicy& policy, float eps) : policy_(policy), eps_(eps) {}

  Tensor conv(const Conv& c, const Tensor& x) const {
    ConvParams p{c.stride, c.padding, policy_.fp16_inputs(OpClass::kConv)};
    return policy_.cast_output(conv3d(x, c.weight, c.bias, p), OpClass::kConv);
  }

  Tensor norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) const {
    return policy_.cast_output(instance_norm(x, gamma, beta, eps_), OpClass::kNorm);
  }

  Tensor conv_norm(const ConvNorm& cn, const Tensor& x) const { return norm(conv(cn.conv, x), cn.gamma, cn.beta); }

  Tensor relu(const Tensor& x) const { return policy_.cast_output(voxseg::relu(x), OpClass::kPointwise); }

  Tensor add(const Tensor& x, const Tensor& y) const {
    return policy_.cast_output(voxseg::add(x, y), OpClass::kPointwise);
  }

  Tensor resize(const Tensor& x, const Extent3& target) const {
    if (x.shape().spatial == target) return x;
    return policy_.cast_output(trilinear_resize(x, target), OpClass::kPointwise);
  }

  Tensor block(const Block& b, const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < b.body.size(); ++i) {
      h = conv_norm(b.body[i], h);
      if (i + 1 < b.body.size()) h = relu(h);
    }
    const Tensor skip = b.shortcut ? conv_norm(*b.shortcut, x) : x;
    return relu(add(h, skip));
  }

  const PrecisionPolicy& policy() const { return policy_; }

 private:
  const PrecisionPolicy& policy_;
  float eps_;
};

void trace_row(ForwardTrace* trace, const std::string& name, const std::vector<Tensor>& branches) {
  if (!trace) return;
  std::vector<Shape> shapes;
  for (const auto& t : branches) shapes.push_back(t.shape());
  trace->rows.emplace_back(name, std::move(shapes));
}

}  // namespace

Tensor Network::forward(const Tensor& x, const ForwardOptions& options) const {
  const Impl& net = *impl_;
  const NetworkConfig& cfg = net.config;
  const Shape& s = x.shape();
  if (s.c != cfg.in_channels) {
    throw ShapeError("forward: expected " + std::to_string(cfg.in_channels) + " input channel(s), got " + s.str());
  }
  const std::int64_t min_extent = min_input_extent(cfg);
  for (int a = 0; a < 3; ++a) {
    if (s.spatial[static_cast<std::size_t>(a)] < min_extent) {
      throw ShapeError("forward: input extent " + std::to_string(s.spatial[static_cast<std::size_t>(a)]) +
                       " on spatial axis " + std::to_string(a) + " is below " + std::to_string(min_extent) +
                       "; branch " + std::to_string(cfg.num_branches()) + " (1/" + std::to_string(min_extent) +
                       " resolution) would degenerate");
    }
  }

  const Runner r(options.policy, cfg.norm_eps);
  ForwardTrace* trace = options.trace;

  Tensor h = r.relu(r.conv_norm(net.stem_conv, r.policy().cast_output(x, OpClass::kPointwise)));
  for (const auto& b : net.stem_blocks) h = r.block(b, h);
  std::vector<Tensor> branches{h};
  trace_row(trace, "Stem", branches);

  for (std::size_t st = 0; st < net.stages.size(); ++st) {
    const auto& t = net.transitions[st];
    std::vector<Tensor> next;
    for (std::size_t br = 0; br < t.convs.size(); ++br) {
      const Tensor& src = br < branches.size() && br + 1 < t.convs.size() ? branches[br] : branches.back();
      next.push_back(r.relu(r.conv_norm(t.convs[br], src)));
    }
    branches = std::move(next);
    trace_row(trace, "Transition " + std::to_string(st + 1), branches);

    const auto& modules = net.stages[st];
    for (std::size_t m = 0; m < modules.size(); ++m) {
      const ExchangeModule& mod = modules[m];
      const std::string label = stage_label(static_cast<int>(st), static_cast<int>(m), static_cast<int>(modules.size()));
      for (std::size_t br = 0; br < branches.size(); ++br) {
        for (const auto& b : mod.blocks[br]) branches[br] = r.block(b, branches[br]);
      }
      trace_row(trace, "Stage " + label, branches);

      std::vector<Tensor> fused;
      for (std::size_t ti = 0; ti < branches.size(); ++ti) {
        const Extent3& target = branches[ti].shape().spatial;
        Tensor acc;
        for (std::size_t sj = 0; sj < branches.size(); ++sj) {
          const FusePath& p = mod.fusion[ti][sj];
          Tensor contrib = branches[sj];
          for (const auto& cn : p.convs) contrib = r.conv_norm(cn, contrib);
          if (p.kind == FusePath::Kind::kUp) contrib = r.resize(contrib, target);
          acc = acc.defined() ? r.add(acc, contrib) : contrib;
        }
        fused.push_back(r.relu(acc));
      }
      branches = std::move(fused);
      trace_row(trace, "Fusion " + label, branches);
    }
  }

  const Extent3& half = branches.front().shape().spatial;
  std::vector<Tensor> up;
  for (const auto& b : branches) up.push_back(r.resize(b, half));
  Tensor cat = r.policy().cast_output(concat_channels(up), OpClass::kPointwise);
  trace_row(trace, "Concatenation", {cat});

  Tensor y = r.relu(r.norm(r.conv(net.head_hidden.conv, cat), net.head_hidden.gamma, net.head_hidden.beta));
  y = r.conv(net.head_out, y);
  y = r.policy().cast_output(softmax_channels(y), OpClass::kSoftmax);
  y = r.resize(y, s.spatial);
  trace_row(trace, "Regression", {y});
  return y;
}

std::vector<LayerRow> Network::describe(const Extent3& input) const {
  const NetworkConfig& cfg = impl_->config;
  auto extent_at = [&input](int branch) {
    Extent3 e{};
    for (std::size_t a = 0; a < 3; ++a) e[a] = branch_extent(input[a], branch);
    return e;
  };
  auto branch_list = [&](int nb) {
    std::vector<std::pair<int, Extent3>> out;
    for (int b = 0; b < nb; ++b) out.emplace_back(cfg.branch_channels[static_cast<std::size_t>(b)], extent_at(b));
    return out;
  };

  std::vector<LayerRow> rows;
  for (const auto& [name, count] : impl_->rows) {
    LayerRow row{name, {}, count};
    if (name == "Stem") {
      row.branches = {{cfg.stem_out_channels(), extent_at(0)}};
    } else if (name == "Concatenation") {
      row.branches = {{cfg.concat_channels(), extent_at(0)}};
    } else if (name == "Regression") {
      row.branches = {{cfg.num_classes, input}};
    } else {
      // "Transition s", "Stage s[.m]" and "Fusion s[.m]" run s + 1 branches.
      const auto space = name.find(' ');
      const int stage = std::stoi(name.substr(space + 1));
      row.branches = branch_list(stage + 1);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace voxseg
