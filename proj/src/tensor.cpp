// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

#include "voxseg/error.hpp"

namespace voxseg {

std::string Shape::str() const {
  std::ostringstream out;
  out << "(" << n << ", " << c << ", " << spatial[0] << ", " << spatial[1] << ", " << spatial[2] << ")";
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.n < 0 || shape.c < 0 || shape.spatial[0] < 0 || shape.spatial[1] < 0 || shape.spatial[2] < 0) {
    throw ShapeError("negative extent in tensor shape " + shape.str());
  }
}

}  // namespace

Tensor::Tensor(const Shape& shape, float fill) : impl_(std::make_shared<Storage>()) {
  check_shape(shape);
  impl_->shape = shape;
  impl_->values.assign(static_cast<std::size_t>(shape.numel()), fill);
}

Tensor::Tensor(const Shape& shape, std::vector<float> values) : impl_(std::make_shared<Storage>()) {
  check_shape(shape);
  if (values.size() != static_cast<std::size_t>(shape.numel())) {
    throw ShapeError("tensor of shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_->shape = shape;
  impl_->values = std::move(values);
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{1, 1, {1, 1, 1}}, value); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::span<float> Tensor::values() { return impl_->values; }
std::span<const float> Tensor::values() const { return impl_->values; }

float Tensor::item() const {
  if (impl_->values.size() != 1) throw ContractError("item() on a tensor with " + std::to_string(numel()) + " elements");
  return impl_->values[0];
}

float* Tensor::plane(std::int64_t n, std::int64_t c) {
  return impl_->values.data() + (n * impl_->shape.c + c) * impl_->shape.voxels();
}

const float* Tensor::plane(std::int64_t n, std::int64_t c) const {
  return impl_->values.data() + (n * impl_->shape.c + c) * impl_->shape.voxels();
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->leaf; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<float> Tensor::grad() { return impl_->grad; }
std::span<const float> Tensor::grad() const { return impl_->grad; }

std::span<float> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

void Tensor::drop_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->values);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

// ---------------------------------------------------------------------------

void Tape::record(std::vector<Tensor> inputs, Tensor output, Adjoint adjoint) {
  output.impl_->requires_grad = true;
  output.impl_->leaf = false;
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(adjoint)});
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward() needs a scalar root, got shape " +
                        (root.defined() ? root.shape().str() : std::string("<undefined>")));
  }
  if (!root.requires_grad()) {
    throw ContractError("backward() root does not require a gradient");
  }
  for (Entry& e : entries_) e.output.drop_grad();

  Tensor seed = root;
  seed.grad_buffer()[0] += 1.0f;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not on a path to the root
    it->adjoint();
    it->output.drop_grad();
  }
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw ContractError("backward() called without an active tape");
  tape->backward(loss);
}

namespace autograd {

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = active_tape();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

Tape* recording_tape(std::span<const Tensor> inputs) {
  Tape* tape = active_tape();
  if (tape == nullptr) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return tape;
  }
  return nullptr;
}

}  // namespace autograd

}  // namespace voxseg
