// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "nightaug/error.hpp"
#include "nightaug/semantic_encoder.hpp"
#include "test_support.hpp"

using namespace nightaug;
using nightaug::testutil::random_tensor;

TEST(DefaultLayers, LastBlocksBeforeFinal) {
  EXPECT_EQ(default_layers(12), (std::vector<int>{6, 7, 8, 9, 10}));
  EXPECT_EQ(default_layers(3), (std::vector<int>{0, 1}));
  EXPECT_EQ(default_layers(12, 2), (std::vector<int>{9, 10}));
}

TEST(ToyEncoder, ShapeContract) {
  const ToyPatchEncoder enc(ToyEncoderMode::kPatchStatistics, 32, 8, 2, 8);
  std::mt19937_64 rng(1);
  const ad::Var x = ad::constant(random_tensor(rng, {32, 32, 3}, 0.0, 1.0));
  const PatchFeatureStack s = extract_stack(enc, x, {0, 1});
  ASSERT_EQ(s.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(s.patches(l), 16);
    EXPECT_EQ(s.channels(l), 8);
    EXPECT_EQ(s.grid_height[l] * s.grid_width[l], s.patches(l));
  }
  const PatchFeatureStack again = extract_stack(enc, x, {0, 1});
  for (std::size_t l = 0; l < 2; ++l)
    EXPECT_EQ(s.features[l].value().values(), again.features[l].value().values());
}

TEST(ToyEncoder, ResizesToDeclaredInput) {
  const ToyPatchEncoder enc;
  const PatchFeatureStack s = extract_stack(enc, ad::constant(Tensor({40, 24, 3}, 0.3)), {0});
  EXPECT_EQ(s.patches(0), 64);
}

TEST(ToyEncoder, MeanIntensityModeOnUniformImage) {
  const ToyPatchEncoder enc(ToyEncoderMode::kMeanIntensity, 32, 8, 2);
  const PatchFeatureStack s = extract_stack(enc, ad::constant(Tensor({32, 32, 3}, 0.42)), {0, 1});
  for (std::size_t l = 0; l < s.size(); ++l) {
    const Tensor& f = s.features[l].value();
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], f[0], 1e-12);
  }
}

TEST(ToyEncoder, LayerOutOfRange) {
  const ToyPatchEncoder enc;
  try {
    extract_stack(enc, ad::constant(Tensor({64, 64, 3})), {0, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfRange);
  }
}

TEST(SampleIndices, FullSetAndDeterminism) {
  Rng r1(5), r2(5);
  const PatchIndexSet a = sample_indices(std::vector<int>{16, 16}, 16, r1);
  const PatchIndexSet b = sample_indices(std::vector<int>{16, 16}, 16, r2);
  EXPECT_EQ(a.indices, b.indices);
  for (const auto& layer : a.indices) {
    EXPECT_EQ(std::set<int>(layer.begin(), layer.end()).size(), 16u);
    EXPECT_EQ(*std::min_element(layer.begin(), layer.end()), 0);
    EXPECT_EQ(*std::max_element(layer.begin(), layer.end()), 15);
  }
  Rng r3(1);
  EXPECT_THROW(sample_indices(std::vector<int>{16, 8}, 9, r3), Error);
}

TEST(SampleIndices, UniformFrequencies) {
  Rng rng(2024);
  std::vector<int> counts(16, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const PatchIndexSet s = sample_indices(std::vector<int>{16}, 4, rng);
    ASSERT_EQ(std::set<int>(s.indices[0].begin(), s.indices[0].end()).size(), 4u);
    for (int idx : s.indices[0]) ++counts[static_cast<std::size_t>(idx)];
  }
  const double p = 0.25, sd = std::sqrt(draws * p * (1 - p));
  for (int c : counts) EXPECT_NEAR(c, draws * p, 3 * sd);
}

TEST(Projection, UnitNormRows) {
  const ToyPatchEncoder enc;
  std::mt19937_64 rng(3);
  const PatchFeatureStack s =
      extract_stack(enc, ad::constant(random_tensor(rng, {64, 64, 3}, 0.0, 1.0)), {0, 1});
  Rng r(4);
  const auto heads = make_heads(s, 32, r);
  const PatchIndexSet idx = sample_indices(s, 10, r);
  const auto out = project(s, idx, heads);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& f : out) {
    ASSERT_EQ(f.dims(), (std::vector<int>{10, 32}));
    for (int i = 0; i < 10; ++i) {
      double n = 0;
      for (int j = 0; j < 32; ++j) n += f.value().at(i, j) * f.value().at(i, j);
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    }
  }
}

TEST(Projection, IdentityHeadPreservesDirection) {
  ProjectionHead h;
  h.w1 = ad::parameter(Tensor::identity(3));
  h.b1 = ad::parameter(Tensor({3}));
  h.w2 = ad::parameter(Tensor::identity(3));
  h.b2 = ad::parameter(Tensor({3}));
  // Positive entries stay positive through the smooth rectifier, which only
  // rescales each coordinate; with equal coordinates the direction is kept.
  const double c = 1.0 / std::sqrt(3.0);
  const Tensor out = h.forward(ad::constant(Tensor::matrix(1, 3, {c, c, c}))).value();
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(out.at(0, j), c, 1e-12);
}

TEST(Projection, HeadGradientMatchesFiniteDifferences) {
  std::mt19937_64 g(5);
  Rng r(6);
  const ProjectionHead h = ProjectionHead::create(6, 6, 4, r);
  const ad::Var rows = ad::constant(random_tensor(g, {5, 6}));
  const Tensor w = random_tensor(g, {5, 4});
  auto loss = [&] { return ad::sum(ad::mul(h.forward(rows), ad::constant(w))); };
  for (const ad::Var& p : h.parameters()) {
    const auto res = nightaug::testutil::check_gradient(loss, p);
    EXPECT_EQ(res.failures, 0) << res.max_rel;
  }
}

TEST(Projection, IndexOutOfRange) {
  const ToyPatchEncoder enc;
  const PatchFeatureStack s = extract_stack(enc, ad::constant(Tensor({64, 64, 3}, 0.5)), {0});
  Rng r(1);
  const auto heads = make_heads(s, 8, r);
  PatchIndexSet bad{{{0, 64}}};
  EXPECT_THROW(project(s, bad, heads), Error);
}

TEST(ToyEncoder, ReceivesNoGradient) {
  const ToyPatchEncoder enc;
  const std::uint64_t before = enc.frozen_digest();
  ad::Var x = ad::parameter(Tensor({64, 64, 3}, 0.5));
  const PatchFeatureStack s = extract_stack(enc, x, {0, 1});
  ad::backward(ad::sum(ad::square(s.features[1])));
  EXPECT_EQ(enc.frozen_digest(), before);
  EXPECT_TRUE(x.grad().all_finite());
}

TEST(ToyEncoder, NormalizedModeIgnoresGainAndColourCast) {
  const ToyPatchEncoder norm(ToyEncoderMode::kNormalizedStatistics, 32, 8, 2, 8);
  const ToyPatchEncoder raw(ToyEncoderMode::kPatchStatistics, 32, 8, 2, 8);
  std::mt19937_64 rng(12);
  const Tensor img = random_tensor(rng, {32, 32, 3}, 0.2, 0.9);
  Tensor dark = img;
  const double cast[3] = {0.85, 0.9, 1.2};
  for (std::size_t i = 0; i < dark.size(); ++i) dark[i] *= 0.25 * cast[i % 3];
  auto max_diff = [](const SemanticEncoder& e, const Tensor& a, const Tensor& b) {
    const PatchFeatureStack sa = extract_stack(e, ad::constant(a), {1});
    const PatchFeatureStack sb = extract_stack(e, ad::constant(b), {1});
    double d = 0;
    for (std::size_t i = 0; i < sa.features[0].value().size(); ++i)
      d = std::max(d, std::abs(sa.features[0].value()[i] - sb.features[0].value()[i]));
    return d;
  };
  EXPECT_LT(max_diff(norm, img, dark), 0.1);
  EXPECT_GT(max_diff(raw, img, dark), 0.3);
  EXPECT_NE(norm.id(), raw.id());
}
