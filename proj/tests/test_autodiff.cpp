// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/autodiff.hpp"
#include "nightaug/error.hpp"
#include "nightaug/optim.hpp"
#include "test_support.hpp"

using namespace nightaug;
using nightaug::testutil::check_gradient;
using nightaug::testutil::random_tensor;

namespace {

void expect_grad_ok(const std::function<ad::Var()>& f, ad::Var p) {
  const auto r = check_gradient(f, p);
  EXPECT_EQ(r.failures, 0) << "max relative error " << r.max_rel;
}

}  // namespace

TEST(Autodiff, ElementwiseGradients) {
  std::mt19937_64 rng(3);
  ad::Var x = ad::parameter(random_tensor(rng, {3, 4}, 0.2, 1.5));
  ad::Var y = ad::parameter(random_tensor(rng, {3, 4}, 0.2, 1.5));
  expect_grad_ok([&] { return ad::sum(ad::mul(ad::log(x), ad::exp(ad::neg(y)))); }, x);
  expect_grad_ok([&] { return ad::sum(ad::div(ad::sqrt(x), ad::add(y, x))); }, y);
  expect_grad_ok([&] { return ad::mean(ad::tanh(ad::mul(x, y))); }, x);
  expect_grad_ok([&] { return ad::sum(ad::atan(ad::sub(x, y))); }, y);
  expect_grad_ok([&] { return ad::sum(ad::silu(ad::scale(x, 3.0))); }, x);
  expect_grad_ok([&] { return ad::sum(ad::log_sigmoid(ad::sub(x, y))); }, x);
  expect_grad_ok([&] { return ad::sum(ad::softplus(ad::sub(y, x))); }, y);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::sigmoid(x))); }, x);
}

TEST(Autodiff, MatrixGradients) {
  std::mt19937_64 rng(4);
  ad::Var a = ad::parameter(random_tensor(rng, {3, 5}));
  ad::Var b = ad::parameter(random_tensor(rng, {4, 5}));
  ad::Var r = ad::parameter(random_tensor(rng, {4}));
  expect_grad_ok([&] { return ad::sum(ad::square(ad::matmul_nt(a, b))); }, a);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::matmul(a, ad::transpose(b)))); }, b);
  expect_grad_ok([&] { return ad::sum(ad::row_softmax(ad::mul_row(ad::matmul_nt(a, b), r))); }, r);
  expect_grad_ok([&] {
    return ad::sum(ad::mul(ad::row_log_softmax(ad::add_row(ad::matmul_nt(a, b), r)),
                           ad::constant(Tensor({3, 4}, 0.3))));
  }, a);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::l2_normalize_rows(a))); }, a);
  expect_grad_ok([&] {
    return ad::sum(ad::mul(ad::l2_normalize_rows(a), ad::constant(Tensor({3, 5}, 0.7))));
  }, a);
  const std::vector<int> rows{2, 0, 2};
  expect_grad_ok([&] { return ad::sum(ad::square(ad::gather_rows(a, rows))); }, a);
  const std::vector<int> zeros{0, 0, 0};
  expect_grad_ok([&] {
    const ad::Var m = ad::gather_rows(ad::reshape(ad::mean_rows(a), {1, 5}), zeros);
    return ad::sum(ad::mul(ad::concat_cols({ad::slice_cols(a, 1, 3), m}), ad::concat_cols({ad::slice_cols(a, 0, 2), m})));
  }, a);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::sum_cols(a))); }, a);
}

TEST(Autodiff, ImageOpGradients) {
  std::mt19937_64 rng(5);
  ad::Var x = ad::parameter(random_tensor(rng, {6, 8, 3}, 0.0, 1.0));
  ad::Var w = ad::parameter(random_tensor(rng, {4, 27}));
  ad::Var bias = ad::parameter(random_tensor(rng, {4}));
  expect_grad_ok([&] { return ad::sum(ad::square(ad::conv2d(x, w, bias, 3, 2, 1))); }, x);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::conv2d(x, w, bias, 3, 1, 0))); }, w);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::conv2d(x, w, bias, 3, 2, 1))); }, bias);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::space_to_depth(x, 2))); }, x);
  expect_grad_ok([&] {
    return ad::sum(ad::mul(ad::depth_to_space(ad::space_to_depth(x, 2), 2), ad::constant(Tensor({6, 8, 3}, 0.5))));
  }, x);
  expect_grad_ok([&] { return ad::sum(ad::square(ad::resize_bilinear(x, 5, 11))); }, x);
}

TEST(Autodiff, SpaceToDepthIsInvertible) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor(rng, {8, 4, 3});
  const Tensor y = ad::depth_to_space(ad::space_to_depth(ad::constant(x), 2), 2).value();
  EXPECT_EQ(y.values(), x.values());
}

TEST(Autodiff, Conv2dMatchesLoopOracle) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor(rng, {5, 7, 2});
  const Tensor w = random_tensor(rng, {3, 18});
  const Tensor out = ad::conv2d(ad::constant(x), ad::constant(w), ad::Var(), 3, 2, 1).value();
  ASSERT_EQ(out.dims(), (std::vector<int>{3, 4, 3}));
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 4; ++ox)
      for (int co = 0; co < 3; ++co) {
        double s = 0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            for (int ci = 0; ci < 2; ++ci) {
              const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 7) continue;
              s += x.at(iy, ix, ci) * w.at(co, (ky * 3 + kx) * 2 + ci);
            }
        EXPECT_NEAR(out.at(oy, ox, co), s, 1e-12);
      }
}

TEST(Autodiff, SharedSubgraphAccumulates) {
  ad::Var x = ad::parameter(Tensor::vector({2.0}));
  const ad::Var y = ad::mul(x, x);
  ad::backward(ad::sum(ad::add(y, y)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Autodiff, ConstantsGetNoGradient) {
  ad::Var c = ad::constant(Tensor::vector({1.0, 2.0}));
  ad::Var p = ad::parameter(Tensor::vector({3.0, 4.0}));
  ad::backward(ad::sum(ad::mul(c, p)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(p.grad()[1], 2.0);
}

TEST(Autodiff, ShapeErrors) {
  EXPECT_THROW(ad::add(ad::constant(Tensor({2})), ad::constant(Tensor({3}))), Error);
  EXPECT_THROW(ad::matmul(ad::constant(Tensor({2, 3})), ad::constant(Tensor({2, 3}))), Error);
}

TEST(Optim, AdamMinimisesQuadratic) {
  ad::Var p = ad::parameter(Tensor::vector({3.0, -2.0}));
  AdamOptions o;
  o.learning_rate = 0.05;
  o.weight_decay = 0.0;
  Adam opt({p}, o);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    ad::backward(ad::sum(ad::square(ad::add_scalar(p, -1.0))));
    opt.step();
  }
  EXPECT_NEAR(p.value()[0], 1.0, 1e-2);
  EXPECT_NEAR(p.value()[1], 1.0, 1e-2);
}

TEST(Optim, DecoupledWeightDecayShrinksWithoutGradient) {
  ad::Var p = ad::parameter(Tensor::vector({1.0}));
  AdamOptions o;
  o.learning_rate = 0.1;
  o.weight_decay = 0.5;
  Adam opt({p}, o);
  opt.zero_grad();
  ad::backward(ad::scale(ad::sum(p), 0.0));
  opt.step();
  EXPECT_NEAR(p.value()[0], 1.0 - 0.1 * 0.5, 1e-12);
}

TEST(Autodiff, ClampRestoringValuesAndGradientGate) {
  ad::Var x = ad::parameter(Tensor({4}, std::vector<double>{-0.5, 0.3, 1.4, 1.2}));
  const ad::Var y = ad::clamp_restoring(x, 0.0, 1.0);
  EXPECT_EQ(y.value().values(), (std::vector<double>{0.0, 0.3, 1.0, 1.0}));
  // Upstream gradient d: below the interval only d < 0 passes, above only d > 0.
  ad::backward(ad::sum(ad::mul(y, ad::constant(Tensor({4}, std::vector<double>{-2.0, 3.0, -1.0, 5.0})))));
  EXPECT_EQ(x.grad().values(), (std::vector<double>{-2.0, 3.0, 0.0, 5.0}));

  ad::Var z = ad::parameter(Tensor({2}, std::vector<double>{-0.5, 1.4}));
  ad::backward(ad::sum(ad::mul(ad::clamp_restoring(z, 0.0, 1.0),
                               ad::constant(Tensor({2}, std::vector<double>{2.0, -1.0})))));
  EXPECT_EQ(z.grad().values(), (std::vector<double>{0.0, 0.0}));
}

TEST(Autodiff, ClampRestoringInteriorGradient) {
  std::mt19937_64 rng(21);
  ad::Var x = ad::parameter(random_tensor(rng, {3, 3}, 0.1, 0.9));
  expect_grad_ok([&] { return ad::sum(ad::square(ad::clamp_restoring(x, 0.0, 1.0))); }, x);
}
