// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/volio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "voxseg/error.hpp"

namespace voxseg {

namespace {

static_assert(std::endian::native == std::endian::little, "VVOL and NIfTI readers assume a little-endian host");

constexpr char kVvolMagic[6] = {'V', 'V', 'O', 'L', '1', '\n'};
constexpr std::size_t kVvolHeaderBytes = 6 + 4 + 12 + 1 + 12;
constexpr std::uint8_t kDtypeFloat = 0;
constexpr std::uint8_t kDtypeLabel = 1;
constexpr std::size_t kNiftiHeaderBytes = 348;

void validate_dims(const Dims3& dims, const std::string& what) {
  if (dims.h <= 0 || dims.w <= 0 || dims.d <= 0) {
    throw ValidationError(what + ": every dimension must be positive, got (" + std::to_string(dims.h) + ", " +
                          std::to_string(dims.w) + ", " + std::to_string(dims.d) + ")");
  }
}

void validate_spacing(const Spacing& s, const std::string& what) {
  for (float v : s) {
    if (!(v > 0.0f) || !std::isfinite(v)) throw ValidationError(what + ": voxel spacing must be positive");
  }
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

template <typename T>
T read_at(const std::vector<char>& bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_header(std::ofstream& out, const Dims3& dims, std::uint8_t dtype, const Spacing& spacing) {
  out.write(kVvolMagic, sizeof(kVvolMagic));
  put<std::uint32_t>(out, 3);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.h));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.w));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.d));
  put<std::uint8_t>(out, dtype);
  for (float s : spacing) put<float>(out, s);
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

AnyVolume parse_vvol(const std::vector<char>& bytes, const std::string& name) {
  if (bytes.size() < kVvolHeaderBytes) throw FormatError(name + ": file shorter than the VVOL header");
  const auto ndim = read_at<std::uint32_t>(bytes, 6);
  if (ndim != 3) throw FormatError(name + ": VVOL ndim must be 3, got " + std::to_string(ndim));
  Dims3 dims{read_at<std::uint32_t>(bytes, 10), read_at<std::uint32_t>(bytes, 14), read_at<std::uint32_t>(bytes, 18)};
  const auto dtype = read_at<std::uint8_t>(bytes, 22);
  if (dtype != kDtypeFloat && dtype != kDtypeLabel) {
    throw FormatError(name + ": unknown VVOL dtype code " + std::to_string(dtype));
  }
  const Spacing spacing{read_at<float>(bytes, 23), read_at<float>(bytes, 27), read_at<float>(bytes, 31)};
  validate_dims(dims, name);
  validate_spacing(spacing, name);

  const std::size_t count = static_cast<std::size_t>(dims.voxels());
  const std::size_t elem = dtype == kDtypeFloat ? sizeof(float) : sizeof(std::uint16_t);
  const std::size_t payload = bytes.size() - kVvolHeaderBytes;
  if (payload < count * elem) {
    throw TruncationError(name + ": header declares " + std::to_string(count) + " voxels but payload holds " +
                          std::to_string(payload / elem));
  }
  if (payload > count * elem) throw FormatError(name + ": trailing bytes after the VVOL payload");

  const char* src = bytes.data() + kVvolHeaderBytes;
  if (dtype == kDtypeFloat) {
    std::vector<float> data(count);
    std::memcpy(data.data(), src, count * sizeof(float));
    return Volume(dims, std::move(data), spacing);
  }
  std::vector<std::uint16_t> raw(count);
  std::memcpy(raw.data(), src, count * sizeof(std::uint16_t));
  std::vector<std::int32_t> labels(raw.begin(), raw.end());
  const int classes = LabelVolume::infer_classes(labels);
  return LabelVolume(dims, std::move(labels), classes, spacing);
}

// Minimal NIfTI-1 ingestion: little-endian single-file images, orientation
// ignored. NIfTI stores x fastest; voxels are transposed so that
// (dim1, dim2, dim3) become (H, W, D) with D fastest.
Volume parse_nifti(const std::vector<char>& bytes, const std::string& name) {
  const auto ndim = read_at<std::int16_t>(bytes, 40);
  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = read_at<std::int16_t>(bytes, 40 + 2 * static_cast<std::size_t>(i));
  if (ndim < 3 || ndim > 7) throw FormatError(name + ": NIfTI dim[0] must be in [3, 7]");
  for (int i = 4; i <= ndim; ++i) {
    if (dim[i] != 1) throw UnsupportedError(name + ": only single 3D volumes are supported");
  }
  const Dims3 dims{dim[1], dim[2], dim[3]};
  validate_dims(dims, name);

  const auto datatype = read_at<std::int16_t>(bytes, 70);
  std::size_t elem = 0;
  switch (datatype) {
    case 2:  // uint8
      elem = 1;
      break;
    case 4:  // int16
      elem = 2;
      break;
    case 16:  // float32
      elem = 4;
      break;
    default:
      throw UnsupportedError(name + ": NIfTI datatype " + std::to_string(datatype) +
                             " not supported (uint8, int16, float32 only)");
  }
  Spacing spacing{std::fabs(read_at<float>(bytes, 80)), std::fabs(read_at<float>(bytes, 84)),
                  std::fabs(read_at<float>(bytes, 88))};
  for (float& s : spacing) {
    if (!(s > 0.0f) || !std::isfinite(s)) s = 1.0f;
  }

  const float vox_offset_f = read_at<float>(bytes, 108);
  if (!(vox_offset_f >= static_cast<float>(kNiftiHeaderBytes)) || !std::isfinite(vox_offset_f)) {
    throw FormatError(name + ": invalid NIfTI vox_offset");
  }
  const auto offset = static_cast<std::size_t>(vox_offset_f);
  const std::size_t count = static_cast<std::size_t>(dims.voxels());
  if (bytes.size() < offset || bytes.size() - offset < count * elem) {
    throw TruncationError(name + ": NIfTI payload shorter than dims " + std::to_string(dims.h) + "x" +
                          std::to_string(dims.w) + "x" + std::to_string(dims.d));
  }

  std::vector<float> data(count);
  const char* src = bytes.data() + offset;
  for (std::int64_t z = 0; z < dims.d; ++z) {
    for (std::int64_t y = 0; y < dims.w; ++y) {
      for (std::int64_t x = 0; x < dims.h; ++x) {
        const std::size_t in = static_cast<std::size_t>((z * dims.w + y) * dims.h + x);
        float value = 0.0f;
        if (elem == 1) {
          value = static_cast<float>(static_cast<std::uint8_t>(src[in]));
        } else if (elem == 2) {
          std::int16_t v;
          std::memcpy(&v, src + in * 2, 2);
          value = static_cast<float>(v);
        } else {
          std::memcpy(&value, src + in * 4, 4);
        }
        data[static_cast<std::size_t>(dims.index(x, y, z))] = value;
      }
    }
  }
  return Volume(dims, std::move(data), spacing);
}

}  // namespace

Volume::Volume(Dims3 dims, std::vector<float> data, Spacing spacing)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  validate_dims(dims_, "Volume");
  validate_spacing(spacing_, "Volume");
  if (data_.size() != static_cast<std::size_t>(dims_.voxels())) {
    throw ValidationError("Volume: data length " + std::to_string(data_.size()) + " != H*W*D " +
                          std::to_string(dims_.voxels()));
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw ValidationError("Volume: non-finite intensity");
  }
}

LabelVolume::LabelVolume(Dims3 dims, std::vector<std::int32_t> data, int num_classes, Spacing spacing)
    : dims_(dims), spacing_(spacing), num_classes_(num_classes), data_(std::move(data)) {
  validate_dims(dims_, "LabelVolume");
  validate_spacing(spacing_, "LabelVolume");
  if (num_classes_ < 2) throw ValidationError("LabelVolume: need at least 2 classes");
  if (data_.size() != static_cast<std::size_t>(dims_.voxels())) {
    throw ValidationError("LabelVolume: data length " + std::to_string(data_.size()) + " != H*W*D " +
                          std::to_string(dims_.voxels()));
  }
  for (std::int32_t l : data_) {
    if (l < 0 || l >= num_classes_) {
      throw ValidationError("LabelVolume: label " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_classes_) + ")");
    }
  }
}

int LabelVolume::infer_classes(std::span<const std::int32_t> data) {
  std::int32_t mx = 0;
  for (std::int32_t l : data) mx = std::max(mx, l);
  return std::max(2, mx + 1);
}

AnyVolume load_volume(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file(path);
  const std::string name = path.string();
  if (bytes.size() >= sizeof(kVvolMagic) && std::memcmp(bytes.data(), kVvolMagic, sizeof(kVvolMagic)) == 0) {
    return parse_vvol(bytes, name);
  }
  if (bytes.size() >= kNiftiHeaderBytes) {
    const auto sizeof_hdr = read_at<std::int32_t>(bytes, 0);
    const bool magic = std::memcmp(bytes.data() + 344, "n+1\0", 4) == 0;
    if (sizeof_hdr == 348 && magic) return parse_nifti(bytes, name);
    const auto u = static_cast<std::uint32_t>(sizeof_hdr);
    const std::uint32_t swapped = (u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24);
    if (swapped == 348u && magic) {
      throw UnsupportedError(name + ": big-endian NIfTI is not supported");
    }
  }
  throw FormatError(name + ": not a VVOL or single-file NIfTI-1 volume");
}

Volume load_intensity(const std::filesystem::path& path) {
  AnyVolume any = load_volume(path);
  if (auto* v = std::get_if<Volume>(&any)) return std::move(*v);
  const auto& labels = std::get<LabelVolume>(any);
  std::vector<float> data(labels.data().begin(), labels.data().end());
  return Volume(labels.dims(), std::move(data), labels.spacing());
}

LabelVolume load_labels(const std::filesystem::path& path, int num_classes) {
  AnyVolume any = load_volume(path);
  if (auto* l = std::get_if<LabelVolume>(&any)) {
    if (num_classes <= 0) return std::move(*l);
    return LabelVolume(l->dims(), std::vector<std::int32_t>(l->data().begin(), l->data().end()), num_classes,
                       l->spacing());
  }
  const auto& v = std::get<Volume>(any);
  std::vector<std::int32_t> labels(v.data().size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float f = v.data()[i];
    if (f < 0.0f || f != std::floor(f)) {
      throw ValidationError(path.string() + ": intensity " + std::to_string(f) + " is not a label");
    }
    labels[i] = static_cast<std::int32_t>(f);
  }
  const int classes = num_classes > 0 ? num_classes : LabelVolume::infer_classes(labels);
  return LabelVolume(v.dims(), std::move(labels), classes, v.spacing());
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  validate_dims(v.dims(), "save_volume");
  std::ofstream out = open_for_write(path);
  write_header(out, v.dims(), kDtypeFloat, v.spacing());
  out.write(reinterpret_cast<const char*>(v.data().data()),
            static_cast<std::streamsize>(v.data().size() * sizeof(float)));
  finish_write(out, path);
}

void save_volume(const LabelVolume& v, const std::filesystem::path& path) {
  validate_dims(v.dims(), "save_volume");
  std::vector<std::uint16_t> raw(v.data().size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::int32_t l = v.data()[i];
    if (l < 0 || l > 0xFFFF) {
      throw ValidationError("save_volume: label " + std::to_string(l) + " does not fit the 16-bit label dtype");
    }
    raw[i] = static_cast<std::uint16_t>(l);
  }
  std::ofstream out = open_for_write(path);
  write_header(out, v.dims(), kDtypeLabel, v.spacing());
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 2));
  finish_write(out, path);
}

Volume zscore_normalize(const Volume& v) {
  const auto data = v.data();
  if (data.size() < 2) throw DegenerateInputError("zscore_normalize: need at least 2 voxels");
  double mean = 0.0;
  for (float x : data) mean += x;
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (float x : data) var += (x - mean) * (x - mean);
  var /= static_cast<double>(data.size());
  if (!(var > 0.0)) throw DegenerateInputError("zscore_normalize: intensity variance is zero");
  const double inv = 1.0 / std::sqrt(var);
  std::vector<float> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = static_cast<float>((data[i] - mean) * inv);
  return Volume(v.dims(), std::move(out), v.spacing());
}

Tensor one_hot(const LabelVolume& y) {
  const std::int64_t vox = y.dims().voxels();
  Tensor t(Shape{1, y.num_classes(), y.dims().extent()});
  auto values = t.values();
  const auto labels = y.data();
  for (std::int64_t v = 0; v < vox; ++v) {
    values[static_cast<std::size_t>(labels[static_cast<std::size_t>(v)] * vox + v)] = 1.0f;
  }
  return t;
}

Tensor to_tensor(const Volume& v) {
  return Tensor(Shape{1, 1, v.dims().extent()}, std::vector<float>(v.data().begin(), v.data().end()));
}

}  // namespace voxseg
