// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "voxseg/config.hpp"
#include "voxseg/error.hpp"
#include "voxseg/network.hpp"

namespace voxseg {

namespace {

constexpr char kMagic[] = "VXCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void bytes(void* dst, std::size_t n) {
    if (n > data_.size() - pos_) throw CheckpointError(path_ + ": truncated checkpoint");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(&v, 4);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<std::int64_t> dims_of(const Shape& s) {
  return {s.n, s.c, s.spatial[0], s.spatial[1], s.spatial[2]};
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::string out(kMagic, kMagicLen);
  const std::string cfg = net.config().serialize();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto& params = net.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    const auto dims = dims_of(p.value.shape());
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_u32(out, static_cast<std::uint32_t>(d));
    const auto v = p.value.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path, const NetworkConfig* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  Reader in(buf.str(), path.string());

  if (in.str(kMagicLen) != std::string(kMagic, kMagicLen)) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::string cfg_text = in.str(in.u32());
  NetworkConfig cfg;
  try {
    cfg = NetworkConfig::from_map(config::parse(cfg_text));
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": stored config is invalid: " + e.what());
  }
  if (expected && !(*expected == cfg)) {
    throw CheckpointError(path.string() + ": checkpoint config does not match the requested config\nstored:\n" +
                          cfg_text + "requested:\n" + expected->serialize());
  }

  // Rebuilding from the stored config yields the parameter layout; payloads
  // then overwrite the initial values.
  Network net = Network::build(cfg, 0);
  auto& params = net.parameters();
  const std::uint32_t count = in.u32();
  if (count != params.size()) {
    throw CheckpointError(path.string() + ": " + std::to_string(count) + " parameters stored, config defines " +
                          std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = in.str(in.u32());
    if (name != p.name) throw CheckpointError(path.string() + ": expected parameter " + p.name + ", found " + name);
    const std::uint32_t rank = in.u32();
    const auto want = dims_of(p.value.shape());
    if (rank != want.size()) throw CheckpointError(path.string() + ": " + name + " has rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) {
      if (in.u32() != static_cast<std::uint32_t>(want[i])) {
        throw CheckpointError(path.string() + ": " + name + " shape differs from " + p.value.shape().str());
      }
    }
    auto v = p.value.values();
    in.bytes(v.data(), v.size_bytes());
  }
  if (!in.done()) throw CheckpointError(path.string() + ": trailing bytes after the last parameter");
  return net;
}

}  // namespace voxseg
