// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "temp_dir.hpp"
#include "voxseg/error.hpp"
#include "voxseg/volio.hpp"

namespace {

using namespace voxseg;
using voxseg::oracle::TempDir;

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Volume ramp(const Dims3& d) {
  std::vector<float> v(static_cast<std::size_t>(d.voxels()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5f * static_cast<float>(i) - 3.0f;
  return Volume(d, std::move(v), {1.0f, 1.5f, 2.0f});
}

TEST(Vvol, IntensityRoundTripIsExact) {
  TempDir tmp;
  const Volume v = ramp({3, 4, 5});
  save_volume(v, tmp / "a.vvol");
  const Volume back = load_intensity(tmp / "a.vvol");
  EXPECT_EQ(back.dims(), v.dims());
  EXPECT_EQ(back.spacing(), v.spacing());
  ASSERT_EQ(back.data().size(), v.data().size());
  EXPECT_TRUE(std::equal(v.data().begin(), v.data().end(), back.data().begin()));
}

TEST(Vvol, HeaderLayout) {
  TempDir tmp;
  save_volume(ramp({2, 3, 4}), tmp / "a.vvol");
  const auto bytes = slurp(tmp / "a.vvol");
  ASSERT_EQ(bytes.size(), 35u + 24 * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "VVOL1\n", 6), 0);
  std::uint32_t u[4];
  std::memcpy(u, bytes.data() + 6, 16);
  EXPECT_EQ(u[0], 3u);
  EXPECT_EQ(u[1], 2u);
  EXPECT_EQ(u[2], 3u);
  EXPECT_EQ(u[3], 4u);
  EXPECT_EQ(bytes[22], 0);
  float first;
  std::memcpy(&first, bytes.data() + 35, 4);
  EXPECT_EQ(first, -3.0f);
}

TEST(Vvol, LabelRoundTripKeepsClasses) {
  TempDir tmp;
  const LabelVolume y({2, 2, 2}, {0, 1, 2, 3, 4, 0, 54, 1}, 55);
  save_volume(y, tmp / "y.vvol");
  const AnyVolume any = load_volume(tmp / "y.vvol");
  ASSERT_TRUE(std::holds_alternative<LabelVolume>(any));
  const LabelVolume back = load_labels(tmp / "y.vvol", 55);
  EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), back.data().begin()));
  EXPECT_EQ(back.num_classes(), 55);
  EXPECT_EQ(load_labels(tmp / "y.vvol").num_classes(), 55);
}

TEST(Vvol, TruncatedPayloadIsReported) {
  TempDir tmp;
  save_volume(ramp({4, 4, 4}), tmp / "a.vvol");
  auto bytes = slurp(tmp / "a.vvol");
  bytes.resize(bytes.size() - 3);
  spill(tmp / "b.vvol", bytes);
  EXPECT_THROW(load_volume(tmp / "b.vvol"), TruncationError);
  bytes.resize(20);
  spill(tmp / "c.vvol", bytes);
  EXPECT_THROW(load_volume(tmp / "c.vvol"), FormatError);
}

TEST(Vvol, BadMagicDtypeAndMissingFile) {
  TempDir tmp;
  save_volume(ramp({2, 2, 2}), tmp / "a.vvol");
  auto bytes = slurp(tmp / "a.vvol");
  bytes[22] = 7;
  spill(tmp / "dtype.vvol", bytes);
  EXPECT_THROW(load_volume(tmp / "dtype.vvol"), FormatError);
  bytes[0] = 'X';
  spill(tmp / "magic.vvol", bytes);
  EXPECT_THROW(load_volume(tmp / "magic.vvol"), FormatError);
  EXPECT_THROW(load_volume(tmp / "nope.vvol"), IoError);
}

TEST(Vvol, RejectsInvalidVolumes) {
  EXPECT_THROW(Volume({2, 2, 2}, std::vector<float>(7)), ValidationError);
  EXPECT_THROW(Volume({0, 2, 2}, {}), ValidationError);
  EXPECT_THROW(LabelVolume({1, 1, 2}, {0, 3}, 3), ValidationError);
  EXPECT_THROW(LabelVolume({1, 1, 2}, {0, -1}, 3), ValidationError);
  EXPECT_THROW(Volume({1, 1, 1}, {std::nanf("")}), ValidationError);
}

TEST(Vvol, LabelsAboveSixteenBitsAreRejected) {
  TempDir tmp;
  const LabelVolume y({1, 1, 2}, {0, 70000}, 70001);
  EXPECT_THROW(save_volume(y, tmp / "y.vvol"), ValidationError);
}

// Hand-built single-file NIfTI-1 with int16 voxels, x fastest.
std::vector<char> make_nifti(std::int16_t nx, std::int16_t ny, std::int16_t nz, std::int16_t datatype,
                             const std::vector<char>& payload) {
  std::vector<char> bytes(352 + payload.size(), 0);
  const std::int32_t hdr = 348;
  std::memcpy(bytes.data(), &hdr, 4);
  const std::int16_t dim[8] = {3, nx, ny, nz, 1, 1, 1, 1};
  std::memcpy(bytes.data() + 40, dim, 16);
  std::memcpy(bytes.data() + 70, &datatype, 2);
  const float pixdim[4] = {1.0f, 1.0f, 2.0f, 3.0f};
  std::memcpy(bytes.data() + 76, pixdim, 16);
  const float offset = 352.0f;
  std::memcpy(bytes.data() + 108, &offset, 4);
  std::memcpy(bytes.data() + 344, "n+1\0", 4);
  std::copy(payload.begin(), payload.end(), bytes.begin() + 352);
  return bytes;
}

TEST(Nifti, ReadsInt16AndTransposesToDFastest) {
  TempDir tmp;
  const std::int16_t nx = 2, ny = 3, nz = 4;
  std::vector<char> payload(static_cast<std::size_t>(nx * ny * nz * 2));
  for (std::int16_t z = 0; z < nz; ++z)
    for (std::int16_t y = 0; y < ny; ++y)
      for (std::int16_t x = 0; x < nx; ++x) {
        const std::int16_t v = static_cast<std::int16_t>(100 * x + 10 * y + z - 50);
        std::memcpy(payload.data() + 2 * ((z * ny + y) * nx + x), &v, 2);
      }
  spill(tmp / "a.nii", make_nifti(nx, ny, nz, 4, payload));
  const Volume v = load_intensity(tmp / "a.nii");
  ASSERT_EQ(v.dims(), (Dims3{2, 3, 4}));
  EXPECT_EQ(v.spacing(), (Spacing{1.0f, 2.0f, 3.0f}));
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z) EXPECT_EQ(v.at(x, y, z), static_cast<float>(100 * x + 10 * y + z - 50));
}

TEST(Nifti, UnsupportedDatatypeAndTruncation) {
  TempDir tmp;
  spill(tmp / "f64.nii", make_nifti(2, 2, 2, 64, std::vector<char>(64)));
  EXPECT_THROW(load_volume(tmp / "f64.nii"), UnsupportedError);
  spill(tmp / "short.nii", make_nifti(2, 2, 2, 16, std::vector<char>(10)));
  EXPECT_THROW(load_volume(tmp / "short.nii"), TruncationError);
}

TEST(Nifti, IntegerImageLoadsAsLabels) {
  TempDir tmp;
  std::vector<char> payload{0, 1, 2, 3, 0, 1, 2, 5};
  spill(tmp / "l.nii", make_nifti(2, 2, 2, 2, payload));
  const LabelVolume y = load_labels(tmp / "l.nii");
  EXPECT_EQ(y.num_classes(), 6);
  EXPECT_EQ(y.at(1, 1, 1), 5);
}

TEST(ZScore, ZeroMeanUnitStd) {
  const Volume z = zscore_normalize(ramp({3, 5, 7}));
  double mean = 0, sq = 0;
  for (float v : z.data()) mean += v;
  mean /= static_cast<double>(z.data().size());
  for (float v : z.data()) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(z.data().size())), 1.0, 1e-5);
  EXPECT_THROW(zscore_normalize(Volume({2, 1, 1}, {4.0f, 4.0f})), DegenerateInputError);
}

TEST(OneHot, SingleOnePerVoxel) {
  const LabelVolume y({1, 2, 2}, {0, 2, 1, 2}, 3);
  const Tensor t = one_hot(y);
  ASSERT_EQ(t.shape(), (Shape{1, 3, {1, 2, 2}}));
  for (std::int64_t v = 0; v < 4; ++v) {
    float s = 0;
    for (int c = 0; c < 3; ++c) s += t.plane(0, c)[v];
    EXPECT_EQ(s, 1.0f);
    EXPECT_EQ(t.plane(0, y.data()[static_cast<std::size_t>(v)])[v], 1.0f);
  }
  const Tensor x = to_tensor(ramp({2, 2, 2}));
  EXPECT_EQ(x.shape(), (Shape{1, 1, {2, 2, 2}}));
  EXPECT_EQ(x.values()[3], -1.5f);
}

}  // namespace
