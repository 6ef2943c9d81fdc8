// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels/scalar.hpp"
#include "voxseg/kernels/kernels.hpp"

namespace voxseg::kernels {
namespace {

const KernelTable kScalarTable{
    Isa::kScalar,         scalar::axpy,        scalar::scatter_axpy, scalar::dot,
    scalar::fp16_encode,  scalar::fp16_decode, scalar::fp16_round,   scalar::fma_tile4x4,
};

const KernelTable* pick_default() {
  if (const char* env = std::getenv("VOXSEG_ISA"); env != nullptr && std::string_view(env) == "scalar") {
    return &kScalarTable;
  }
  if (const KernelTable* t = table_for(Isa::kAvx2)) return t;
  return &kScalarTable;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

#ifndef VOXSEG_HAVE_AVX2
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace detail
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return kScalarTable; }

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return &kScalarTable;
    case Isa::kAvx2:
      return detail::avx2_table();
  }
  return nullptr;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

bool set_active(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(&active()), ok_(set_active(isa)) {}

ScopedIsa::~ScopedIsa() { slot().store(previous_, std::memory_order_release); }

}  // namespace voxseg::kernels
