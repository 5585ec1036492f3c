// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "nightaug/autodiff.hpp"

namespace nightaug {

struct AdamOptions {
  double learning_rate = 1e-5;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with decoupled weight decay. Owns moment buffers for a fixed list of
/// parameter leaves.
class Adam {
 public:
  Adam(std::vector<ad::Var> params, AdamOptions options);

  void zero_grad();
  void step();
  long steps_taken() const { return t_; }
  void set_learning_rate(double lr) { opt_.learning_rate = lr; }
  const std::vector<ad::Var>& params() const { return params_; }

 private:
  std::vector<ad::Var> params_;
  AdamOptions opt_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace nightaug
