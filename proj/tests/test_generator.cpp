// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/error.hpp"
#include "nightaug/generator.hpp"
#include "test_support.hpp"

using namespace nightaug;
using nightaug::testutil::random_tensor;

namespace {

NoiseSchedule noiseless() { return NoiseSchedule::variance_preserving(1.0, 999); }

Tensor condition() { return prompt_embedding("night-time street scene", ToyBackbone::kCondition); }

}  // namespace

TEST(NoiseSchedule, Examples) {
  NoiseSchedule s;
  s.alpha = 0.8;
  s.sigma = 0.6;
  const Tensor out = inject_noise(ad::constant(Tensor({2, 2, 1}, 1.0)), s,
                                  ad::constant(Tensor({2, 2, 1}, 2.0)))
                         .value();
  for (double v : out.values()) EXPECT_NEAR(v, 2.0, 1e-15);

  const NoiseSchedule zero_sigma = noiseless();
  const Tensor z = Tensor({3}, 0.4);
  EXPECT_EQ(inject_noise(ad::constant(z), zero_sigma, ad::constant(Tensor({3}, 5.0))).value().values(),
            z.values());

  NoiseSchedule zero_alpha = NoiseSchedule::variance_preserving(0.0, 10);
  const Tensor o = inject_noise(ad::constant(z), zero_alpha, ad::constant(Tensor({3}))).value();
  for (double v : o.values()) EXPECT_EQ(v, 0.0);
}

TEST(NoiseSchedule, Validation) {
  NoiseSchedule s;
  EXPECT_NO_THROW(s.validate());
  EXPECT_NEAR(s.alpha * s.alpha + s.sigma * s.sigma, 1.0, 1e-12);
  s.sigma = 0.5;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_THROW(NoiseSchedule::variance_preserving(1.5, 0), Error);
  EXPECT_THROW(inject_noise(ad::constant(Tensor({2})), NoiseSchedule{}, ad::constant(Tensor({3}))),
               Error);
}

TEST(ToyBackbone, LatentShapeAndDeterminism) {
  const ToyBackbone bb;
  std::mt19937_64 rng(1);
  const ad::Var x = ad::constant(random_tensor(rng, {8, 8, 3}, 0.0, 1.0));
  const EncodedLatent a = bb.encode(x, nullptr);
  const EncodedLatent b = bb.encode(x, nullptr);
  EXPECT_EQ(a.latent.dims(), (std::vector<int>{4, 4, ToyBackbone::kLatent}));
  EXPECT_EQ(a.latent.value().values(), b.latent.value().values());
}

TEST(ToyBackbone, DecodeInvertsEncodeInIdentityMode) {
  const ToyBackbone bb;
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(rng, {8, 12, 3}, 0.0, 1.0);
  const EncodedLatent enc = bb.encode(ad::constant(x), nullptr);
  const Tensor y = bb.decode(enc.latent, enc.skips, nullptr).value();
  ASSERT_TRUE(y.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-6);
}

TEST(ToyBackbone, IdentityTranslationWithoutNoise) {
  const ToyBackbone bb;
  const AdapterSet adapters = attach_adapters(bb, ToyBackbone::default_targets(), 2, 5);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {16, 16, 3}, 0.0, 1.0);
  Rng r(9);
  const Tensor y = translate(bb, &adapters, noiseless(), ad::constant(x), condition(), r).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

TEST(ToyBackbone, DarkeningScalesMeanIntensity) {
  const ToyBackbone bb(ToyMode::kDarkening);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor(rng, {8, 8, 3}, 0.0, 1.0);
    Rng r(trial);
    const Tensor y = translate(bb, nullptr, noiseless(), ad::constant(x), condition(), r).value();
    EXPECT_NEAR(y.mean(), 0.25 * x.mean(), 1e-6);
  }
}

TEST(ToyBackbone, TranslationIsSeedDeterministic) {
  const ToyBackbone bb;
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(rng, {8, 8, 3}, 0.0, 1.0);
  Rng r1(77), r2(77), r3(78);
  const NoiseSchedule s;
  const Tensor a = translate(bb, nullptr, s, ad::constant(x), condition(), r1).value();
  const Tensor b = translate(bb, nullptr, s, ad::constant(x), condition(), r2).value();
  const Tensor c = translate(bb, nullptr, s, ad::constant(x), condition(), r3).value();
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
  EXPECT_EQ(a.dims(), x.dims());
  for (double v : a.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(ToyBackbone, OneDenoiserCallPerTranslation) {
  const ToyBackbone bb;
  Rng r(1);
  const ad::Var x = ad::constant(Tensor({8, 8, 3}, 0.5));
  for (int i = 1; i <= 3; ++i) {
    translate(bb, nullptr, NoiseSchedule{}, x, condition(), r);
    EXPECT_EQ(bb.denoiser_calls(), i);
  }
}

TEST(ToyBackbone, IndivisibleImageRejected) {
  const ToyBackbone bb;
  Rng r(1);
  try {
    translate(bb, nullptr, NoiseSchedule{}, ad::constant(Tensor({7, 8, 3})), condition(), r);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_NE(std::string(e.what()).find("divisible by 2"), std::string::npos);
  }
}

TEST(ToyBackbone, StageFailureNamesStage) {
  const ToyBackbone bb;
  Rng r(1);
  try {
    translate(bb, nullptr, NoiseSchedule{}, ad::constant(Tensor({8, 8, 3})), Tensor({3}), r);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTranslation);
    EXPECT_NE(std::string(e.what()).find("'denoise'"), std::string::npos);
  }
}

TEST(ToyBackbone, GradientsReachAdaptersAndNotBaseWeights) {
  const ToyBackbone bb;
  AdapterSet adapters = attach_adapters(bb, ToyBackbone::default_targets(), 2, 5);
  std::mt19937_64 rng(6);
  for (const auto& [name, a] : adapters.adapters()) {
    ad::Var b = a.b;
    b.mutable_value() = random_tensor(rng, b.dims(), -0.1, 0.1);
  }
  const std::uint64_t digest = bb.frozen_digest();
  const ad::Var x = ad::constant(random_tensor(rng, {8, 8, 3}, 0.2, 0.8));
  auto forward = [&] {
    Rng r(3);
    return translate(bb, &adapters, NoiseSchedule{}, x, condition(), r);
  };
  // Saturated pixels get weights pointing further out, where the gated clamp
  // passes no gradient, so the tape matches finite differences.
  Tensor w = random_tensor(rng, {8, 8, 3}, -1.0, 1.0);
  const Tensor y0 = forward().value();
  int saturated = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (y0[i] <= 0.0) w[i] = 1.0;
    if (y0[i] >= 1.0) w[i] = -1.0;
    saturated += y0[i] <= 0.0 || y0[i] >= 1.0;
  }
  EXPECT_LT(saturated, static_cast<int>(w.size()));
  auto loss = [&] { return ad::mean(ad::mul(forward(), ad::constant(w))); };
  for (const char* name : {"decoder.conv0", "denoiser.out", "enc.conv1"}) {
    const LoraAdapter* a = adapters.find(name);
    const auto ra = nightaug::testutil::check_gradient(loss, a->a);
    const auto rb = nightaug::testutil::check_gradient(loss, a->b);
    EXPECT_EQ(ra.failures, 0) << name << " A " << ra.max_rel;
    EXPECT_EQ(rb.failures, 0) << name << " B " << rb.max_rel;
  }
  const auto rm = nightaug::testutil::check_gradient(loss, bb.mix());
  EXPECT_EQ(rm.failures, 0) << rm.max_rel;
  EXPECT_EQ(bb.frozen_digest(), digest);
}

TEST(ToyBackbone, AttachRejectsUnknownTarget) {
  const ToyBackbone bb;
  EXPECT_THROW(attach_adapters(bb, {"no.such.weight"}, 2, 1), Error);
  EXPECT_EQ(bb.named_weights().size(), 11u);
  EXPECT_EQ(parse_toy_mode("darkening"), ToyMode::kDarkening);
  EXPECT_THROW(parse_toy_mode("bright"), Error);
}

TEST(PromptEmbedding, UnitNormAndStable) {
  const Tensor a = prompt_embedding("night", 8);
  const Tensor b = prompt_embedding("night", 8);
  const Tensor c = prompt_embedding("day", 8);
  double n = 0;
  for (double v : a.values()) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
}
