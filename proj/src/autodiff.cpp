// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "nightaug/error.hpp"

namespace nightaug::ad {

namespace {

void accumulate(const std::shared_ptr<Node>& parent, const Tensor& contribution) {
  if (!parent->requires_grad) return;
  Tensor& g = parent->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

Tensor& grad_of(const std::shared_ptr<Node>& parent) { return parent->grad_buffer(); }

void require_rank(const Var& x, int rank, const char* op) {
  require(x.valid(), ErrorCode::kInvalidArgument, std::string(op) + ": null input");
  require(x.value().rank() == rank, ErrorCode::kShapeMismatch,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
              x.value().shape_string());
}

template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* op, F f, DA da, DB db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.same_shape(bv);
  const bool a_scalar = !same && av.size() == 1;
  const bool b_scalar = !same && bv.size() == 1;
  require(same || a_scalar || b_scalar, ErrorCode::kShapeMismatch,
          std::string(op) + ": incompatible shapes " + av.shape_string() + " and " +
              bv.shape_string());
  const Tensor& shape_src = a_scalar ? bv : av;
  Tensor out(shape_src.dims());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    out[i] = f(x, y);
  }
  return make_result(std::move(out), {a, b},
                     [a_scalar, b_scalar, da, db](Node& node) {
                       const auto& pa = node.parents[0];
                       const auto& pb = node.parents[1];
                       const Tensor& g = node.grad;
                       const std::size_t n = g.size();
                       if (pa->requires_grad) {
                         Tensor& ga = grad_of(pa);
                         for (std::size_t i = 0; i < n; ++i) {
                           const double x = pa->value[a_scalar ? 0 : i];
                           const double y = pb->value[b_scalar ? 0 : i];
                           ga[a_scalar ? 0 : i] += g[i] * da(x, y, node.value[i]);
                         }
                       }
                       if (pb->requires_grad) {
                         Tensor& gb = grad_of(pb);
                         for (std::size_t i = 0; i < n; ++i) {
                           const double x = pa->value[a_scalar ? 0 : i];
                           const double y = pb->value[b_scalar ? 0 : i];
                           gb[b_scalar ? 0 : i] += g[i] * db(x, y, node.value[i]);
                         }
                       }
                     });
}

template <class F, class D>
Var unary(const Var& x, F f, D d) {
  const Tensor& xv = x.value();
  Tensor out(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(std::move(out), {x}, [d](Node& node) {
    const auto& p = node.parents[0];
    Tensor& gp = grad_of(p);
    for (std::size_t i = 0; i < gp.size(); ++i)
      gp[i] += node.grad[i] * d(p->value[i], node.value[i]);
  });
}

double stable_softplus(double v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (!grad.same_shape(value)) grad = Tensor(value.dims());
  return grad;
}

const Tensor& Var::grad() const {
  node_->grad_buffer();
  return node_->grad;
}

double Var::item() const {
  require(node_ && node_->value.size() == 1, ErrorCode::kShapeMismatch,
          "item() on non-scalar tensor");
  return node_->value[0];
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor(node_->value.dims());
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var constant_scalar(double value) { return constant(Tensor::scalar(value)); }

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var detach(const Var& x) { return constant(x.value()); }

Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  for (const Var& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Var& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& loss) {
  require(loss.valid() && loss.size() == 1, ErrorCode::kShapeMismatch,
          "backward() requires a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* child = node->parents[next++].get();
      if (child->requires_grad && visited.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) {
      node->grad_buffer();
      node->backward(*node);
    }
  }
}

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Var minimum(const Var& a, const Var& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return std::min(x, y); },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var maximum(const Var& a, const Var& b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return std::max(x, y); },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var scale(const Var& x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(const Var& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(const Var& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var atan(const Var& x) {
  return unary(
      x, [](double v) { return std::atan(v); }, [](double v, double) { return 1.0 / (1.0 + v * v); });
}

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return -stable_softplus(-v); },
      [](double v, double) { return 1.0 - stable_sigmoid(v); });
}

Var softplus(const Var& x) {
  return unary(x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var clamp_restoring(const Var& x, double lo, double hi) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return make_result(std::move(out), {x}, [lo, hi](Node& node) {
    const Tensor& in = node.parents[0]->value;
    Tensor& g = grad_of(node.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = node.grad[i];
      const double v = in[i];
      // Below lo only a descent step that raises v passes (d < 0), above hi
      // only one that lowers it.
      if ((v >= lo && v <= hi) || (v < lo && d < 0) || (v > hi && d > 0)) g[i] += d;
    }
  });
}

Var sum(const Var& x) {
  return make_result(Tensor::scalar(x.value().sum()), {x}, [](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    const double s = node.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.size());
  require(n > 0, ErrorCode::kShapeMismatch, "mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int n = a.value().dim(0), k = a.value().dim(1), m = b.value().dim(1);
  require(b.value().dim(0) == k, ErrorCode::kShapeMismatch,
          "matmul: " + a.value().shape_string() + " x " + b.value().shape_string());
  Tensor out({n, m});
  const double* A = a.value().data();
  const double* B = b.value().data();
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      for (int j = 0; j < m; ++j) out.data()[i * m + j] += aip * B[p * m + j];
    }
  return make_result(std::move(out), {a, b}, [n, k, m](Node& node) {
    const auto& pa = node.parents[0];
    const auto& pb = node.parents[1];
    const double* G = node.grad.data();
    if (pa->requires_grad) {
      double* GA = grad_of(pa).data();
      const double* B = pb->value.data();
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0;
          for (int j = 0; j < m; ++j) s += G[i * m + j] * B[p * m + j];
          GA[i * k + p] += s;
        }
    }
    if (pb->requires_grad) {
      double* GB = grad_of(pb).data();
      const double* A = pa->value.data();
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (int j = 0; j < m; ++j) GB[p * m + j] += aip * G[i * m + j];
        }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const int n = a.value().dim(0), k = a.value().dim(1), m = b.value().dim(0);
  require(b.value().dim(1) == k, ErrorCode::kShapeMismatch,
          "matmul_nt: " + a.value().shape_string() + " x " + b.value().shape_string() + "^T");
  Tensor out({n, m});
  const double* A = a.value().data();
  const double* B = b.value().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      out.data()[i * m + j] = s;
    }
  return make_result(std::move(out), {a, b}, [n, k, m](Node& node) {
    const auto& pa = node.parents[0];
    const auto& pb = node.parents[1];
    const double* G = node.grad.data();
    if (pa->requires_grad) {
      double* GA = grad_of(pa).data();
      const double* B = pb->value.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double g = G[i * m + j];
          if (g == 0.0) continue;
          for (int p = 0; p < k; ++p) GA[i * k + p] += g * B[j * k + p];
        }
    }
    if (pb->requires_grad) {
      double* GB = grad_of(pb).data();
      const double* A = pa->value.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const double g = G[i * m + j];
          if (g == 0.0) continue;
          for (int p = 0; p < k; ++p) GB[j * k + p] += g * A[i * k + p];
        }
    }
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const int n = a.value().dim(0), m = a.value().dim(1);
  Tensor out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = a.value().at(i, j);
  return make_result(std::move(out), {a}, [n, m](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) g.at(i, j) += node.grad.at(j, i);
  });
}

Var add_row(const Var& x, const Var& row) {
  require_rank(x, 2, "add_row");
  const int n = x.value().dim(0), m = x.value().dim(1);
  require(row.size() == static_cast<std::size_t>(m), ErrorCode::kShapeMismatch,
          "add_row: row length mismatch");
  Tensor out = x.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) += row.value()[static_cast<std::size_t>(j)];
  return make_result(std::move(out), {x, row}, [n, m](Node& node) {
    accumulate(node.parents[0], node.grad);
    const auto& pr = node.parents[1];
    if (pr->requires_grad) {
      Tensor& gr = grad_of(pr);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gr[static_cast<std::size_t>(j)] += node.grad.at(i, j);
    }
  });
}

Var mul_row(const Var& x, const Var& row) {
  require_rank(x, 2, "mul_row");
  const int n = x.value().dim(0), m = x.value().dim(1);
  require(row.size() == static_cast<std::size_t>(m), ErrorCode::kShapeMismatch,
          "mul_row: row length mismatch");
  Tensor out = x.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) *= row.value()[static_cast<std::size_t>(j)];
  return make_result(std::move(out), {x, row}, [n, m](Node& node) {
    const auto& px = node.parents[0];
    const auto& pr = node.parents[1];
    if (px->requires_grad) {
      Tensor& gx = grad_of(px);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          gx.at(i, j) += node.grad.at(i, j) * pr->value[static_cast<std::size_t>(j)];
    }
    if (pr->requires_grad) {
      Tensor& gr = grad_of(pr);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          gr[static_cast<std::size_t>(j)] += node.grad.at(i, j) * px->value.at(i, j);
    }
  });
}

Var mean_rows(const Var& x) {
  require_rank(x, 2, "mean_rows");
  const int n = x.value().dim(0), m = x.value().dim(1);
  require(n > 0, ErrorCode::kShapeMismatch, "mean_rows of empty matrix");
  Tensor out({m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] += x.value().at(i, j);
  for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] /= n;
  return make_result(std::move(out), {x}, [n, m](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) g.at(i, j) += node.grad[static_cast<std::size_t>(j)] / n;
  });
}

Var sum_cols(const Var& x) {
  require_rank(x, 2, "sum_cols");
  const int n = x.value().dim(0), m = x.value().dim(1);
  Tensor out({n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(i)] += x.value().at(i, j);
  return make_result(std::move(out), {x}, [n, m](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) g.at(i, j) += node.grad[static_cast<std::size_t>(i)];
  });
}

Var row_softmax(const Var& x) {
  require_rank(x, 2, "row_softmax");
  const int n = x.value().dim(0), m = x.value().dim(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, x.value().at(i, j));
    double z = 0;
    for (int j = 0; j < m; ++j) z += (out.at(i, j) = std::exp(x.value().at(i, j) - mx));
    for (int j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  return make_result(std::move(out), {x}, [n, m](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i) {
      double dot = 0;
      for (int j = 0; j < m; ++j) dot += node.grad.at(i, j) * node.value.at(i, j);
      for (int j = 0; j < m; ++j) {
        const double y = node.value.at(i, j);
        if (y != 0.0) g.at(i, j) += y * (node.grad.at(i, j) - dot);
      }
    }
  });
}

Var row_log_softmax(const Var& x) {
  require_rank(x, 2, "row_log_softmax");
  const int n = x.value().dim(0), m = x.value().dim(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, x.value().at(i, j));
    double z = 0;
    for (int j = 0; j < m; ++j) z += std::exp(x.value().at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < m; ++j) out.at(i, j) = x.value().at(i, j) - lse;
  }
  return make_result(std::move(out), {x}, [n, m](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i) {
      double gs = 0;
      for (int j = 0; j < m; ++j) gs += node.grad.at(i, j);
      for (int j = 0; j < m; ++j)
        g.at(i, j) += node.grad.at(i, j) - std::exp(node.value.at(i, j)) * gs;
    }
  });
}

Var l2_normalize_rows(const Var& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const int n = x.value().dim(0), m = x.value().dim(1);
  Tensor out({n, m});
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int j = 0; j < m; ++j) s += x.value().at(i, j) * x.value().at(i, j);
    const double nr = std::sqrt(s);
    require(nr > 0, ErrorCode::kNonFinite, "l2_normalize_rows: zero-norm row");
    norms[static_cast<std::size_t>(i)] = nr;
    for (int j = 0; j < m; ++j) out.at(i, j) = x.value().at(i, j) / nr;
  }
  return make_result(std::move(out), {x}, [n, m, norms](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i) {
      double dot = 0;
      for (int j = 0; j < m; ++j) dot += node.grad.at(i, j) * node.value.at(i, j);
      const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
      for (int j = 0; j < m; ++j)
        g.at(i, j) += inv * (node.grad.at(i, j) - node.value.at(i, j) * dot);
    }
  });
}

Var gather_rows(const Var& x, std::span<const int> rows) {
  require_rank(x, 2, "gather_rows");
  const int n = x.value().dim(0), m = x.value().dim(1);
  std::vector<int> idx(rows.begin(), rows.end());
  for (int r : idx)
    require(r >= 0 && r < n, ErrorCode::kOutOfRange,
            "gather_rows: index " + std::to_string(r) + " out of range [0," +
                std::to_string(n) + ")");
  const int k = static_cast<int>(idx.size());
  Tensor out({k, m});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = x.value().at(idx[static_cast<std::size_t>(i)], j);
  return make_result(std::move(out), {x}, [idx, m](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < m; ++j) g.at(idx[i], j) += node.grad.at(static_cast<int>(i), j);
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  require_rank(x, 2, "slice_cols");
  const int n = x.value().dim(0), m = x.value().dim(1);
  require(0 <= begin && begin <= end && end <= m, ErrorCode::kOutOfRange,
          "slice_cols: bad range");
  const int w = end - begin;
  Tensor out({n, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = x.value().at(i, begin + j);
  return make_result(std::move(out), {x}, [n, w, begin](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) g.at(i, begin + j) += node.grad.at(i, j);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols: no inputs");
  const int n = parts[0].value().dim(0);
  std::vector<int> widths;
  int total = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    require(p.value().dim(0) == n, ErrorCode::kShapeMismatch, "concat_cols: row mismatch");
    widths.push_back(p.value().dim(1));
    total += p.value().dim(1);
  }
  Tensor out({n, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < widths[k]; ++j) out.at(i, off + j) = parts[k].value().at(i, j);
    off += widths[k];
  }
  return make_result(std::move(out), parts, [n, widths](Node& node) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const auto& p = node.parents[k];
      if (p->requires_grad) {
        Tensor& g = grad_of(p);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < widths[k]; ++j) g.at(i, j) += node.grad.at(i, off + j);
      }
      off += widths[k];
    }
  });
}

Var reshape(const Var& x, std::vector<int> dims) {
  Tensor out = x.value().reshaped(std::move(dims));
  return make_result(std::move(out), {x}, [](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
  });
}

Var element(const Var& x, std::size_t i) {
  require(i < x.size(), ErrorCode::kOutOfRange, "element: index out of range");
  return make_result(Tensor::scalar(x.value()[i]), {x}, [i](Node& node) {
    grad_of(node.parents[0])[i] += node.grad[0];
  });
}

Var stack(const std::vector<Var>& scalars) {
  std::vector<double> v;
  v.reserve(scalars.size());
  for (const Var& s : scalars) {
    require(s.size() == 1, ErrorCode::kShapeMismatch, "stack: expects scalars");
    v.push_back(s.value()[0]);
  }
  return make_result(Tensor::vector(std::move(v)), scalars, [](Node& node) {
    for (std::size_t k = 0; k < node.parents.size(); ++k)
      if (node.parents[k]->requires_grad) grad_of(node.parents[k])[0] += node.grad[k];
  });
}

Var space_to_depth(const Var& x, int f) {
  require_rank(x, 3, "space_to_depth");
  const int H = x.value().dim(0), W = x.value().dim(1), C = x.value().dim(2);
  require(f > 0 && H % f == 0 && W % f == 0, ErrorCode::kShapeMismatch,
          "space_to_depth: dimensions " + x.value().shape_string() +
              " not divisible by " + std::to_string(f));
  const int h = H / f, w = W / f, c = C * f * f;
  Tensor out({h, w, c});
  // Output channel = (dy * f + dx) * C + ch.
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx)
      for (int ch = 0; ch < C; ++ch)
        out.at(y / f, xx / f, ((y % f) * f + (xx % f)) * C + ch) = x.value().at(y, xx, ch);
  return make_result(std::move(out), {x}, [H, W, C, f](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        for (int ch = 0; ch < C; ++ch)
          g.at(y, xx, ch) += node.grad.at(y / f, xx / f, ((y % f) * f + (xx % f)) * C + ch);
  });
}

Var depth_to_space(const Var& x, int f) {
  require_rank(x, 3, "depth_to_space");
  const int h = x.value().dim(0), w = x.value().dim(1), c = x.value().dim(2);
  require(f > 0 && c % (f * f) == 0, ErrorCode::kShapeMismatch,
          "depth_to_space: channels not divisible by factor^2");
  const int C = c / (f * f), H = h * f, W = w * f;
  Tensor out({H, W, C});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx)
      for (int ch = 0; ch < C; ++ch)
        out.at(y, xx, ch) = x.value().at(y / f, xx / f, ((y % f) * f + (xx % f)) * C + ch);
  return make_result(std::move(out), {x}, [H, W, C, f](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        for (int ch = 0; ch < C; ++ch)
          g.at(y / f, xx / f, ((y % f) * f + (xx % f)) * C + ch) += node.grad.at(y, xx, ch);
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride,
           int pad) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 2, "conv2d weight");
  const int H = x.value().dim(0), W = x.value().dim(1), Cin = x.value().dim(2);
  const int Cout = weight.value().dim(0);
  const int K = kernel * kernel * Cin;
  require(weight.value().dim(1) == K, ErrorCode::kShapeMismatch,
          "conv2d: weight " + weight.value().shape_string() + " incompatible with input " +
              x.value().shape_string());
  require(stride > 0 && kernel > 0, ErrorCode::kInvalidArgument, "conv2d: bad kernel/stride");
  const int Ho = (H + 2 * pad - kernel) / stride + 1;
  const int Wo = (W + 2 * pad - kernel) / stride + 1;
  require(Ho > 0 && Wo > 0, ErrorCode::kShapeMismatch, "conv2d: input too small");
  const bool has_bias = bias.valid();

  // im2col, kept for the backward pass.
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(Ho) * Wo * K, 0.0);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox) {
      double* row = cols->data() + (static_cast<std::size_t>(oy) * Wo + ox) * K;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride - pad + ky;
        if (iy < 0 || iy >= H) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (ix < 0 || ix >= W) continue;
          for (int c = 0; c < Cin; ++c) row[(ky * kernel + kx) * Cin + c] = x.value().at(iy, ix, c);
        }
      }
    }

  Tensor out({Ho, Wo, Cout});
  const double* Wt = weight.value().data();
  for (int p = 0; p < Ho * Wo; ++p) {
    const double* row = cols->data() + static_cast<std::size_t>(p) * K;
    for (int o = 0; o < Cout; ++o) {
      double s = has_bias ? bias.value()[static_cast<std::size_t>(o)] : 0.0;
      const double* wr = Wt + static_cast<std::size_t>(o) * K;
      for (int q = 0; q < K; ++q) s += row[q] * wr[q];
      out.data()[static_cast<std::size_t>(p) * Cout + o] = s;
    }
  }

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(
      std::move(out), parents,
      [cols, H, W, Cin, Cout, K, Ho, Wo, kernel, stride, pad, has_bias](Node& node) {
        const auto& px = node.parents[0];
        const auto& pw = node.parents[1];
        const double* G = node.grad.data();
        if (pw->requires_grad) {
          double* GW = grad_of(pw).data();
          for (int p = 0; p < Ho * Wo; ++p) {
            const double* row = cols->data() + static_cast<std::size_t>(p) * K;
            for (int o = 0; o < Cout; ++o) {
              const double g = G[static_cast<std::size_t>(p) * Cout + o];
              if (g == 0.0) continue;
              double* wr = GW + static_cast<std::size_t>(o) * K;
              for (int q = 0; q < K; ++q) wr[q] += g * row[q];
            }
          }
        }
        if (has_bias && node.parents[2]->requires_grad) {
          Tensor& GB = grad_of(node.parents[2]);
          for (int p = 0; p < Ho * Wo; ++p)
            for (int o = 0; o < Cout; ++o)
              GB[static_cast<std::size_t>(o)] += G[static_cast<std::size_t>(p) * Cout + o];
        }
        if (px->requires_grad) {
          Tensor& GX = grad_of(px);
          const double* Wt = pw->value.data();
          std::vector<double> dcol(static_cast<std::size_t>(K));
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              const std::size_t p = static_cast<std::size_t>(oy) * Wo + ox;
              std::fill(dcol.begin(), dcol.end(), 0.0);
              for (int o = 0; o < Cout; ++o) {
                const double g = G[p * Cout + o];
                if (g == 0.0) continue;
                const double* wr = Wt + static_cast<std::size_t>(o) * K;
                for (int q = 0; q < K; ++q) dcol[static_cast<std::size_t>(q)] += g * wr[q];
              }
              for (int ky = 0; ky < kernel; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= W) continue;
                  for (int c = 0; c < Cin; ++c)
                    GX.at(iy, ix, c) += dcol[static_cast<std::size_t>((ky * kernel + kx) * Cin + c)];
                }
              }
            }
        }
      });
}

Var pointwise(const Var& x, const Var& weight) {
  require_rank(x, 3, "pointwise");
  const int H = x.value().dim(0), W = x.value().dim(1), C = x.value().dim(2);
  const Var flat = reshape(x, {H * W, C});
  const Var y = matmul_nt(flat, weight);
  return reshape(y, {H, W, weight.value().dim(0)});
}

Var resize_bilinear(const Var& x, int height, int width) {
  require_rank(x, 3, "resize_bilinear");
  const int H = x.value().dim(0), W = x.value().dim(1), C = x.value().dim(2);
  require(height > 0 && width > 0, ErrorCode::kInvalidArgument, "resize_bilinear: bad size");
  if (H == height && W == width) return x;

  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double s = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * s - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(H, height);
  const auto tx = taps(W, width);
  Tensor out({height, width, C});
  for (int y = 0; y < height; ++y) {
    const Tap a = ty[static_cast<std::size_t>(y)];
    for (int xx = 0; xx < width; ++xx) {
      const Tap b = tx[static_cast<std::size_t>(xx)];
      for (int c = 0; c < C; ++c) {
        const double top = (1 - b.w1) * x.value().at(a.i0, b.i0, c) + b.w1 * x.value().at(a.i0, b.i1, c);
        const double bot = (1 - b.w1) * x.value().at(a.i1, b.i0, c) + b.w1 * x.value().at(a.i1, b.i1, c);
        out.at(y, xx, c) = (1 - a.w1) * top + a.w1 * bot;
      }
    }
  }
  return make_result(std::move(out), {x}, [ty, tx, height, width, C](Node& node) {
    Tensor& g = grad_of(node.parents[0]);
    for (int y = 0; y < height; ++y) {
      const Tap a = ty[static_cast<std::size_t>(y)];
      for (int xx = 0; xx < width; ++xx) {
        const Tap b = tx[static_cast<std::size_t>(xx)];
        for (int c = 0; c < C; ++c) {
          const double gv = node.grad.at(y, xx, c);
          g.at(a.i0, b.i0, c) += gv * (1 - a.w1) * (1 - b.w1);
          g.at(a.i0, b.i1, c) += gv * (1 - a.w1) * b.w1;
          g.at(a.i1, b.i0, c) += gv * a.w1 * (1 - b.w1);
          g.at(a.i1, b.i1, c) += gv * a.w1 * b.w1;
        }
      }
    }
  });
}

}  // namespace nightaug::ad
