// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a handle to a node of a dynamically built graph. Parameters are
// long-lived leaf nodes; every forward pass builds fresh interior nodes that
// hold shared references back to their inputs, so a graph lives exactly as
// long as the loss Var that roots it. backward() accumulates into the grad of
// every reachable node that requires it.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nightaug/tensor.hpp"

namespace nightaug::ad {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  // Allocates a zero gradient of the value's shape on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::vector<int>& dims() const { return node_->value.dims(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const;
  bool valid() const { return node_ != nullptr; }

  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var constant_scalar(double value);
Var parameter(Tensor value);
Var detach(const Var& x);

// Builds an interior node. The node requires grad iff any parent does; the
// backward closure receives the node (its grad is populated) and must push
// contributions into parents that require grad.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward);

// Accumulates d(loss)/d(node) into every reachable node. The loss must be a
// single-element tensor.
void backward(const Var& loss);

// Elementwise arithmetic. Binary ops accept identical shapes or a
// single-element operand broadcast against the other.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
Var neg(const Var& x);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var square(const Var& x);
Var abs(const Var& x);
Var tanh(const Var& x);
Var atan(const Var& x);
Var sigmoid(const Var& x);
Var log_sigmoid(const Var& x);
Var softplus(const Var& x);
Var silu(const Var& x);
// Values outside [lo, hi] are clipped and receive zero gradient.
Var clamp(const Var& x, double lo, double hi);
// Same values as clamp. Outside [lo, hi] the gradient passes only where a
// descent step would move the input back toward the interval.
Var clamp_restoring(const Var& x, double lo, double hi);

Var sum(const Var& x);
Var mean(const Var& x);

// Matrix ops on {rows, cols} tensors.
Var matmul(const Var& a, const Var& b);
// a * b^T, the layout of a linear layer with weight {out, in}.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
// Adds / multiplies a {cols} vector to every row.
Var add_row(const Var& x, const Var& row);
Var mul_row(const Var& x, const Var& row);
// Column-wise mean over rows: {rows, cols} -> {cols}.
Var mean_rows(const Var& x);
// Row-wise sum: {rows, cols} -> {rows}.
Var sum_cols(const Var& x);
Var row_softmax(const Var& x);
Var row_log_softmax(const Var& x);
Var l2_normalize_rows(const Var& x);
Var gather_rows(const Var& x, std::span<const int> rows);
Var slice_cols(const Var& x, int begin, int end);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(const Var& x, std::vector<int> dims);
// Picks element i of the flattened tensor as a scalar.
Var element(const Var& x, std::size_t i);
// Packs scalars into a {n} vector.
Var stack(const std::vector<Var>& scalars);

// Image ops on {H, W, C} tensors.
Var space_to_depth(const Var& x, int factor);
Var depth_to_space(const Var& x, int factor);
// weight {Cout, k*k*Cin} in (ky, kx, cin) order; bias {Cout} or invalid Var.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel,
           int stride, int pad);
// Pointwise (1x1) linear map over channels, weight {Cout, Cin}.
Var pointwise(const Var& x, const Var& weight);
Var resize_bilinear(const Var& x, int height, int width);

}  // namespace nightaug::ad
