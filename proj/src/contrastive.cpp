// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nightaug/error.hpp"

namespace nightaug {

namespace {

void require_embeddings(const ad::Var& z, const char* what) {
  require(z.value().rank() == 2 && z.value().dim(0) >= 1, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected {N_p, d} embeddings, got " + z.value().shape_string());
  require(z.value().all_finite(), ErrorCode::kNonFinite,
          std::string(what) + ": non-finite embeddings");
}

}  // namespace

ad::Var similarity_distribution(const ad::Var& z) {
  require_embeddings(z, "similarity_distribution");
  return ad::row_softmax(ad::matmul_nt(z, z));
}

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  require(p.size() == q.size() && !p.empty(), ErrorCode::kShapeMismatch,
          "jsd: distributions differ in length");
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    require(p[i] >= 0.0 && q[i] >= 0.0, ErrorCode::kInvalidArgument,
            "jsd: negative probability");
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) out += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) out += 0.5 * q[i] * std::log(q[i] / m);
  }
  return out;
}

ad::Var jsd_rows(const ad::Var& p, const ad::Var& q) {
  require(p.value().same_shape(q.value()), ErrorCode::kShapeMismatch,
          "jsd: " + p.value().shape_string() + " vs " + q.value().shape_string());
  for (std::size_t i = 0; i < p.size(); ++i)
    require(p.value()[i] >= 0.0 && q.value()[i] >= 0.0, ErrorCode::kInvalidArgument,
            "jsd: negative probability");
  const bool vec = p.value().rank() == 1;
  const int n = vec ? 1 : p.value().dim(0);
  const int m = vec ? p.value().dim(0) : p.value().dim(1);
  Tensor value({n});
  for (int r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int c = 0; c < m; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * m + c;
      const double a = p.value()[i], b = q.value()[i], mid = 0.5 * (a + b);
      if (a > 0) acc += 0.5 * a * std::log(a / mid);
      if (b > 0) acc += 0.5 * b * std::log(b / mid);
    }
    value[static_cast<std::size_t>(r)] = acc;
  }
  if (vec) value = Tensor::scalar(value[0]);
  // d/dp_i = 0.5 log(2 p_i / (p_i + q_i)), symmetric for q.
  return ad::make_result(std::move(value), {p, q}, [p, q, n, m](ad::Node& node) {
    auto pn = p.node(), qn = q.node();
    for (int r = 0; r < n; ++r) {
      const double g = node.grad[static_cast<std::size_t>(r)];
      for (int c = 0; c < m; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * m + c;
        const double a = pn->value[i], b = qn->value[i], s = a + b;
        if (s <= 0) continue;
        if (pn->requires_grad && a > 0) pn->grad_buffer()[i] += g * 0.5 * std::log(2 * a / s);
        if (qn->requires_grad && b > 0) qn->grad_buffer()[i] += g * 0.5 * std::log(2 * b / s);
      }
    }
  });
}

ad::Var src_loss(const ad::Var& f_source, const ad::Var& f_translated) {
  require(f_source.value().same_shape(f_translated.value()), ErrorCode::kShapeMismatch,
          "src_loss: source " + f_source.value().shape_string() + " vs translated " +
              f_translated.value().shape_string());
  return ad::sum(
      jsd_rows(similarity_distribution(f_source), similarity_distribution(f_translated)));
}

ad::Var src_loss(const std::vector<ad::Var>& f_source, const std::vector<ad::Var>& f_translated) {
  require(f_source.size() == f_translated.size() && !f_source.empty(), ErrorCode::kShapeMismatch,
          "src_loss: layer counts differ");
  ad::Var total = src_loss(f_source[0], f_translated[0]);
  for (std::size_t l = 1; l < f_source.size(); ++l)
    total = ad::add(total, src_loss(f_source[l], f_translated[l]));
  return total;
}

Tensor hard_negative_weights(const Tensor& features, double gamma) {
  require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::kInvalidArgument,
          "hard_negative_weights: gamma must be > 0");
  require(features.rank() == 2, ErrorCode::kShapeMismatch,
          "hard_negative_weights: expected {N_p, d} features");
  require(features.all_finite(), ErrorCode::kNonFinite, "hard_negative_weights: non-finite input");
  const int n = features.dim(0), d = features.dim(1);
  Tensor w({n, n});
  if (n == 1) return w;
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += features.at(i, c) * features.at(j, c);
      row[static_cast<std::size_t>(j)] = dot / gamma;
      mx = std::max(mx, row[static_cast<std::size_t>(j)]);
    }
    double z = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) z += std::exp(row[static_cast<std::size_t>(j)] - mx);
    for (int j = 0; j < n; ++j)
      w.at(i, j) = j == i ? 0.0 : std::exp(row[static_cast<std::size_t>(j)] - mx) / z;
  }
  return w;
}

ad::Var hdce_loss(const ad::Var& f_translated, const ad::Var& f_source, const Tensor& weights,
                  double tau) {
  require(tau > 0.0 && std::isfinite(tau), ErrorCode::kInvalidArgument,
          "hdce_loss: tau must be > 0");
  require_embeddings(f_translated, "hdce_loss");
  require_embeddings(f_source, "hdce_loss");
  require(f_translated.value().same_shape(f_source.value()), ErrorCode::kShapeMismatch,
          "hdce_loss: query " + f_translated.value().shape_string() + " vs key " +
              f_source.value().shape_string());
  const int n = f_source.value().dim(0);
  require(n >= 2, ErrorCode::kInvalidArgument, "hdce_loss: needs at least two patches");
  require(weights.rank() == 2 && weights.dim(0) == n && weights.dim(1) == n,
          ErrorCode::kShapeMismatch, "hdce_loss: weight matrix must be N_p x N_p");
  // Large finite offset instead of -inf keeps the log-softmax free of NaNs.
  constexpr double kMasked = -1e30;
  // logits[k][j] = f_T[k] . f_S[j] / tau
  const ad::Var logits = ad::scale(ad::matmul_nt(f_translated, f_source), 1.0 / tau);
  // -log R_k = log((N) sum_{j != k} W_kj exp(l_kj)) - l_kk, via a stable
  // log-sum-exp with log W as an additive offset.
  Tensor offset({n, n});
  Tensor diag_mask({n, n});
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) {
      const double wkj = weights.at(k, j);
      offset.at(k, j) = (j == k || wkj <= 0.0) ? kMasked : std::log(wkj);
      diag_mask.at(k, j) = j == k ? 1.0 : 0.0;
    }
  const ad::Var shifted = ad::add(logits, ad::constant(std::move(offset)));
  // log-sum-exp per row = log_softmax trick: lse = x_j - log_softmax(x)_j for any j.
  const ad::Var lse_terms = ad::sub(shifted, ad::row_log_softmax(shifted));
  // Every finite column of lse_terms holds the same lse; pick an off-diagonal
  // column with positive weight through a fixed selector.
  Tensor selector({n, n});
  for (int k = 0; k < n; ++k) {
    int pick = -1;
    double best = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != k && weights.at(k, j) > best) {
        best = weights.at(k, j);
        pick = j;
      }
    require(pick >= 0, ErrorCode::kInvalidArgument,
            "hdce_loss: a weight row has no positive off-diagonal entry");
    selector.at(k, pick) = 1.0;
  }
  const ad::Var lse = ad::sum_cols(ad::mul(lse_terms, ad::constant(std::move(selector))));
  const ad::Var positive = ad::sum_cols(ad::mul(logits, ad::constant(std::move(diag_mask))));
  const ad::Var neg_log_r =
      ad::sub(ad::add_scalar(lse, std::log(static_cast<double>(n - 1))), positive);
  return ad::mean(neg_log_r);
}

ad::Var hdce_loss(const std::vector<ad::Var>& f_translated, const std::vector<ad::Var>& f_source,
                  double tau, double gamma) {
  require(f_translated.size() == f_source.size() && !f_source.empty(), ErrorCode::kShapeMismatch,
          "hdce_loss: layer counts differ");
  ad::Var total;
  for (std::size_t l = 0; l < f_source.size(); ++l) {
    const Tensor w = hard_negative_weights(f_source[l].value(), gamma);
    const ad::Var term = hdce_loss(f_translated[l], f_source[l], w, tau);
    total = l == 0 ? term : ad::add(total, term);
  }
  return total;
}

double RampSchedule::weight(long step) const {
  require(step >= 0, ErrorCode::kOutOfRange, "ramp step must be >= 0");
  if (ramp_steps <= 0) return 1.0;
  return std::min(static_cast<double>(step) / static_cast<double>(ramp_steps), 1.0);
}

}  // namespace nightaug
