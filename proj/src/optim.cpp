// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/optim.hpp"

#include <cmath>

#include "nightaug/error.hpp"

namespace nightaug {

Adam::Adam(std::vector<ad::Var> params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const auto& p : params_) {
    require(p.requires_grad(), ErrorCode::kInvalidArgument,
            "Adam: every parameter must be a trainable leaf");
    m_.emplace_back(p.dims());
    v_.emplace_back(p.dims());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& w = params_[k].mutable_value();
    const Tensor& g = params_[k].grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1 - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1 - opt_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= opt_.learning_rate * (mhat / (std::sqrt(vhat) + opt_.epsilon) + opt_.weight_decay * w[i]);
    }
  }
}

}  // namespace nightaug
