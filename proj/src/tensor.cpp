// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <sstream>

namespace ndif {

// Eigen vectors give buffers aligned to the widest SIMD width, so vectorised
// kernels see the same alignment on every run.
struct Tensor::Impl {
  Shape shape;
  Eigen::VectorXd data;
  Eigen::VectorXd grad;
  bool requires_grad = false;
};

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::empty(Shape shape) {
  auto impl = std::make_shared<Impl>();
  impl->data.resize(static_cast<Eigen::Index>(shape_numel(shape)));
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = empty(std::move(shape));
  t.impl_->data.setConstant(value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t = empty(std::move(shape));
  std::copy(values.begin(), values.end(), t.impl_->data.data());
  return t;
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t = empty(std::move(shape));
  for (auto& v : t.impl_->data) v = dist(rng);
  return t;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const {
  return static_cast<std::size_t>(impl().data.size());
}

std::span<const double> Tensor::data() const {
  const auto& d = impl().data;
  return {d.data(), static_cast<std::size_t>(d.size())};
}

std::span<double> Tensor::mutable_data() {
  auto& d = impl().data;
  return {d.data(), static_cast<std::size_t>(d.size())};
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl().requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() != 0; }

std::span<const double> Tensor::grad() const {
  const auto& gr = impl().grad;
  return {gr.data(), static_cast<std::size_t>(gr.size())};
}

std::span<double> Tensor::grad_buffer() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor");
  auto& i = *impl_;
  if (i.grad.size() == 0) i.grad = Eigen::VectorXd::Zero(i.data.size());
  return {i.grad.data(), static_cast<std::size_t>(i.grad.size())};
}

void Tensor::zero_grad() {
  impl().grad.setZero();
}

Tensor Tensor::detach() const {
  Tensor t = empty(shape());
  t.impl_->data = impl().data;
  return t;
}

bool Graph::needs_record(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) {
    return t != nullptr && t->requires_grad();
  });
}

void Graph::record(std::vector<Tensor> inputs, Tensor output,
                   BackwardFn backward) {
  if (consumed_) {
    throw std::logic_error("graph already ran backward; build a new graph");
  }
  output.set_requires_grad(true);
  nodes_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Graph::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  if (consumed_) {
    throw std::logic_error("backward() called twice on one graph");
  }
  consumed_ = true;
  loss.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    for (auto& in : it->inputs) {
      if (in.requires_grad()) in.grad_buffer();
    }
    if (!it->output.has_grad()) continue;
    it->backward(it->output);
  }
}

}  // namespace ndif
