// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ndif/errors.hpp"

namespace ndif {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles with an optional gradient buffer.
///
/// Copies share storage (handle semantics). Values written by an operation
/// are never modified afterwards; only leaf parameters are mutated, and only
/// by the optimizer or by explicit initialisation code.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  // Contents unspecified; for operations that overwrite every element.
  static Tensor empty(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero-filled buffer on first use. The gradient is
  // bookkeeping shared by all handles, so const handles may accumulate.
  std::span<double> grad_buffer() const;
  void zero_grad();

  // Fresh storage with the same values; no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl() const;
  Impl& impl();

  std::shared_ptr<Impl> impl_;
};

/// Define-by-run tape of differentiable operations.
///
/// Operations append a node when the graph is recording and at least one
/// input requires a gradient. Nodes are stored in execution order, so the
/// reverse pass is a single backwards sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Tensor& output)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  static Graph inference() { return Graph(false); }

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // Returns true when the op must be recorded (and the output tracked).
  bool needs_record(std::initializer_list<const Tensor*> inputs) const;
  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and runs every node once in reverse order.
  // Gradients accumulate into leaf buffers; call zero_grad between steps.
  void backward(Tensor& loss);

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  bool recording_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace ndif
