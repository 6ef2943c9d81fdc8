// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace voxseg {

using Extent3 = std::array<std::int64_t, 3>;

/// (batch, channel, spatial[3]). The three spatial axes use the same order as
/// Volume, (H, W, D) with the last axis fastest in memory.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  Extent3 spatial{0, 0, 0};

  std::int64_t voxels() const { return spatial[0] * spatial[1] * spatial[2]; }
  std::int64_t numel() const { return n * c * voxels(); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense float32 tensor. A Tensor is a shared handle: copies alias the same
/// storage, the way autodiff graphs need. Use `clone()` for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape, float fill = 0.0f);
  Tensor(const Shape& shape, std::vector<float> values);

  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t numel() const { return shape().numel(); }

  std::span<float> values();
  std::span<const float> values() const;
  float item() const;

  /// Pointer to the first voxel of (n, c).
  float* plane(std::int64_t n, std::int64_t c);
  const float* plane(std::int64_t n, std::int64_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  /// True for tensors not produced by a recorded operation.
  bool is_leaf() const;

  bool has_grad() const;
  std::span<float> grad();
  std::span<const float> grad() const;
  /// Gradient buffer, allocated as zeros on first use. Gradients are
  /// accumulator state, writable through any handle to the tensor.
  std::span<float> grad_buffer() const;
  void zero_grad();
  void drop_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  struct Storage {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;
    bool requires_grad = false;
    bool leaf = true;
  };
  std::shared_ptr<Storage> impl_;
};

/// Ordered record of differentiable operations. Entries are appended as
/// operations execute, so inputs always precede the operations consuming
/// them; `backward` replays adjoints in exact reverse order.
class Tape {
 public:
  using Adjoint = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, Adjoint adjoint);

  /// Seeds d(root)/d(root) = 1 and runs every adjoint in reverse. Gradients
  /// of leaves accumulate across calls; intermediate gradients are reset at
  /// the start of each call and released once consumed.
  void backward(const Tensor& root);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    Adjoint adjoint;
  };
  std::vector<Entry> entries_;
};

/// Tape that operations on this thread record into, or nullptr.
Tape* active_tape();

/// Makes `tape` the active tape for the current thread while alive.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread while alive.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Backpropagates a scalar loss through the active tape.
void backward(const Tensor& loss);

namespace autograd {

/// Tape that should record an operation over `inputs`, or nullptr when no
/// tape is active or no input requires a gradient.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);
Tape* recording_tape(std::span<const Tensor> inputs);

}  // namespace autograd

}  // namespace voxseg
