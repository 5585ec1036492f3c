// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Patch-wise contrastive objectives: semantic relation consistency (JSD
// between intra-image similarity distributions) and hard-negative
// contrastive estimation with similarity-weighted negatives.

#include <vector>

#include "nightaug/autodiff.hpp"

namespace nightaug {

/// Row k is softmax_i(z_k . z_i) over all N_p patches, self term included.
ad::Var similarity_distribution(const ad::Var& z);

/// Jensen-Shannon divergence in nats between matching rows of P and Q,
/// returned as an {n} vector (or a scalar for {n} inputs). 0 log 0 = 0.
ad::Var jsd_rows(const ad::Var& p, const ad::Var& q);
double jsd(const std::vector<double>& p, const std::vector<double>& q);

/// Sum over queries of JSD(S_k || T_k) for one layer.
ad::Var src_loss(const ad::Var& f_source, const ad::Var& f_translated);
/// Per-layer losses summed in layer order.
ad::Var src_loss(const std::vector<ad::Var>& f_source, const std::vector<ad::Var>& f_translated);

/// Row-softmax of (F F^T) / gamma with the diagonal excluded.
Tensor hard_negative_weights(const Tensor& features, double gamma);

/// Mean over queries of -log R with the negative expectation taken as the
/// W-weighted average over j != k, scaled by N = N_p - 1.
ad::Var hdce_loss(const ad::Var& f_translated, const ad::Var& f_source, const Tensor& weights,
                  double tau);
/// Per-layer losses summed in layer order, each layer's weights computed
/// from its (detached) source embeddings.
ad::Var hdce_loss(const std::vector<ad::Var>& f_translated, const std::vector<ad::Var>& f_source,
                  double tau, double gamma);

struct RampSchedule {
  long ramp_steps = 12000;

  /// min(step / ramp_steps, 1); a zero-length ramp is always 1.
  double weight(long step) const;
};

}  // namespace nightaug
