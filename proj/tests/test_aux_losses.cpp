// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/aux_losses.hpp"
#include "nightaug/error.hpp"
#include "nightaug/generator.hpp"
#include "nightaug/optim.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace nightaug;
using nightaug::testutil::check_gradient;
using nightaug::testutil::random_tensor;

namespace {

BoundingBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0, 20), size(0.5, 10);
  const double x = pos(rng), y = pos(rng);
  return BoundingBox::make(x, y, x + size(rng), y + size(rng));
}

ObjectAnnotation ped(double x0, double y0, double x1, double y1) {
  ObjectAnnotation a;
  a.box = BoundingBox::make(x0, y0, x1, y1);
  return a;
}

// logit = w . mean_rgb(image) + b
class LinearDiscriminator final : public Discriminator {
 public:
  LinearDiscriminator() : w_(ad::parameter(Tensor::vector({0.1, -0.2, 0.05}))), b_(ad::parameter(Tensor({1}))) {}
  ad::Var logit(const ad::Var& image) const override {
    const auto& d = image.value().dims();
    const ad::Var m = ad::reshape(ad::mean_rows(ad::reshape(image, {d[0] * d[1], d[2]})), {1, 3});
    return ad::reshape(ad::add(ad::matmul_nt(m, ad::reshape(w_, {1, 3})), ad::reshape(b_, {1, 1})), {1});
  }
  std::vector<ad::Var> parameters() const override { return {w_, b_}; }

 private:
  ad::Var w_, b_;
};

}  // namespace

TEST(Ciou, Examples) {
  const BoundingBox a = BoundingBox::make(0, 0, 2, 2), b = BoundingBox::make(1, 1, 3, 3);
  EXPECT_EQ(ciou_loss(a, a), 0.0);
  EXPECT_NEAR(ciou_loss(a, b), oracle::ciou(a, b), 1e-8);
  EXPECT_GT(ciou_loss(a, BoundingBox::make(5, 0, 7, 2)), 1.0);
  EXPECT_THROW(ciou_loss(a, BoundingBox{1, 1, 1, 2}), Error);
}

TEST(Ciou, MatchesOracleAndIsNonNegative) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const BoundingBox p = random_box(rng), q = random_box(rng);
    const double v = ciou_loss(p, q);
    EXPECT_NEAR(v, oracle::ciou(p, q), 1e-8);
    EXPECT_GE(v, 0.0);
  }
}

TEST(Ciou, MonotoneInIouForConcentricSquares) {
  // Same center and aspect ratio: only the overlap term changes.
  const BoundingBox t = BoundingBox::make(-2, -2, 2, 2);
  double prev = 2.0;
  for (double half = 4.0; half >= 2.0; half -= 0.25) {  // IoU rises as half shrinks
    const double v = ciou_loss(BoundingBox::make(-half, -half, half, half), t);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Ciou, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const BoundingBox p = random_box(rng), q = random_box(rng);
    ad::Var pv = ad::parameter(Tensor::vector({p.x0, p.y0, p.x1, p.y1}));
    const ad::Var qv = ad::constant(Tensor::vector({q.x0, q.y0, q.x1, q.y1}));
    const auto r = check_gradient([&] { return ciou_loss(pv, qv); }, pv);
    EXPECT_EQ(r.failures, 0) << r.max_rel;
  }
}

TEST(Dfl, Examples) {
  std::vector<double> onehot(9, -1e3);
  onehot[3] = 0;
  EXPECT_NEAR(dfl_loss(ad::constant(Tensor::vector(onehot)), 3.0).item(), 0.0, 1e-12);
  Tensor half({9}, -1e3);
  half[4] = half[5] = 0;
  EXPECT_NEAR(dfl_loss(ad::constant(half), 4.5).item(), std::log(2.0), 1e-12);
  EXPECT_THROW(dfl_loss(ad::constant(half), 8.5), Error);
  EXPECT_THROW(dfl_loss(ad::constant(half), -0.1), Error);
  EXPECT_NO_THROW(dfl_loss(ad::constant(half), 8.0));
}

TEST(Dfl, MatchesOracleAndGradient) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 8);
  for (int t = 0; t < 100; ++t) {
    const Tensor logits = random_tensor(rng, {9}, -2, 2);
    const double y = t == 0 ? 8.0 : u(rng);
    EXPECT_NEAR(dfl_loss(ad::constant(logits), y).item(), oracle::dfl(logits.values(), y), 1e-10);
  }
  for (int t = 0; t < 20; ++t) {
    ad::Var logits = ad::parameter(random_tensor(rng, {9}, -2, 2));
    const double y = u(rng);
    const auto r = check_gradient([&] { return dfl_loss(logits, y); }, logits);
    EXPECT_EQ(r.failures, 0);
  }
}

TEST(Bce, MatchesOracle) {
  std::mt19937_64 rng(4);
  const Tensor l = random_tensor(rng, {7}, -3, 3);
  const std::vector<double> y{1, 0, 0, 1, 1, 0, 1};
  EXPECT_NEAR(bce_with_logits(ad::constant(l), Tensor({7}, y)).item(), oracle::bce_with_logits(l.values(), y),
              1e-12);
}

TEST(Identity, Examples) {
  const ad::Var x = ad::constant(Tensor({8, 8, 3}, 0.8));
  EXPECT_EQ(identity_loss([](const ad::Var& v) { return v; }, x).item(), 0.0);
  EXPECT_NEAR(identity_loss([](const ad::Var& v) { return ad::add_scalar(v, 0.1); }, x).item(), 0.1, 1e-12);
  const ToyBackbone dark(ToyMode::kDarkening);
  const Tensor cond = prompt_embedding("night", ToyBackbone::kCondition);
  auto gen = [&](const ad::Var& v) {
    Rng r(1);
    return translate(dark, nullptr, NoiseSchedule::variance_preserving(1.0, 999), v, cond, r);
  };
  EXPECT_NEAR(identity_loss(gen, x).item(), 0.6, 1e-9);
  EXPECT_THROW(identity_loss(x, ad::constant(Tensor({4, 4, 3}))), Error);
}

TEST(Identity, OracleAndGradient) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    ad::Var g = ad::parameter(random_tensor(rng, {8, 8, 3}, 0, 1));
    const Tensor target = random_tensor(rng, {8, 8, 3}, 0, 1);
    EXPECT_NEAR(identity_loss(g, ad::constant(target)).item(), oracle::mean_abs_diff(g.value(), target), 1e-12);
    EXPECT_EQ(check_gradient([&] { return identity_loss(g, ad::constant(target)); }, g).failures, 0);
  }
}

TEST(Adversarial, Examples) {
  const ad::Var half = ad::constant(Tensor({4}, 0.5));
  EXPECT_NEAR(discriminator_loss_from_probabilities(half, half).item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(generator_adversarial_loss_from_probabilities(half).item(), std::log(0.5), 1e-12);
  try {
    generator_adversarial_loss_from_probabilities(ad::constant(Tensor::vector({0.5, 1.0})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContractViolation);
  }
}

TEST(Adversarial, LogitFormsMatchOracle) {
  LinearDiscriminator d;
  std::mt19937_64 rng(6);
  std::vector<ad::Var> real, fake;
  std::vector<double> pr, pf;
  for (int i = 0; i < 3; ++i) {
    real.push_back(ad::constant(random_tensor(rng, {8, 8, 3}, 0, 0.3)));
    fake.push_back(ad::constant(random_tensor(rng, {8, 8, 3}, 0.5, 1)));
    pr.push_back(d.probability(real.back().value()));
    pf.push_back(d.probability(fake.back().value()));
  }
  EXPECT_NEAR(discriminator_loss(d, real, fake).item(), oracle::discriminator_loss(pr, pf), 1e-12);
  EXPECT_NEAR(generator_adversarial_loss(d, fake).item(), oracle::generator_adversarial_loss(pf, false), 1e-12);
  EXPECT_NEAR(generator_adversarial_loss(d, fake, true).item(), oracle::generator_adversarial_loss(pf, true),
              1e-12);
}

TEST(Adversarial, FakesDetachedForDiscriminatorUpdate) {
  LinearDiscriminator d;
  ad::Var fake = ad::parameter(Tensor({8, 8, 3}, 0.7));
  ad::backward(discriminator_loss(d, {ad::constant(Tensor({8, 8, 3}, 0.1))}, {fake}));
  EXPECT_EQ(fake.grad().sum(), 0.0);
  ad::Var fake2 = ad::parameter(Tensor({8, 8, 3}, 0.7));
  ad::backward(generator_adversarial_loss(d, {fake2}));
  EXPECT_NE(fake2.grad().sum(), 0.0);
}

TEST(Adversarial, OneStepIncreasesSeparation) {
  LinearDiscriminator d;
  std::vector<ad::Var> real, fake;
  for (int i = 0; i < 4; ++i) {
    real.push_back(ad::constant(Tensor({8, 8, 3}, 0.1 + 0.02 * i)));
    fake.push_back(ad::constant(Tensor({8, 8, 3}, 0.8 - 0.02 * i)));
  }
  auto separation = [&] {
    double s = 0;
    for (int i = 0; i < 4; ++i) s += d.logit(real[i]).item() - d.logit(fake[i]).item();
    return s / 4;
  };
  const double before = separation();
  for (ad::Var p : d.parameters()) p.zero_grad();
  ad::backward(discriminator_loss(d, real, fake));
  for (ad::Var p : d.parameters())
    for (std::size_t i = 0; i < p.size(); ++i) p.mutable_value()[i] -= 0.5 * p.grad()[i];
  EXPECT_GT(separation(), before);
}

TEST(Adversarial, GradientWrtImage) {
  const ToyDiscriminator d(5, std::make_shared<ToyPatchEncoder>(ToyEncoderMode::kPatchStatistics, 8, 4, 2, 8));
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    ad::Var img = ad::parameter(random_tensor(rng, {8, 8, 3}, 0.1, 0.9));
    const auto r = check_gradient([&] { return generator_adversarial_loss(d, {img}); }, img);
    EXPECT_EQ(r.failures, 0) << r.max_rel;
  }
}

TEST(Detector, RequiresFrozen) {
  ToyDetector det;
  const ad::Var img = ad::constant(Tensor({32, 32, 3}, 0.5));
  try {
    detector_consistency_loss(det, img, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContractViolation);
  }
}

TEST(Detector, EmptyTargetsBackgroundOnly) {
  ToyDetector det;
  det.set_frozen(true);
  DetectorLosses parts;
  const ad::Var img = ad::constant(Tensor({32, 32, 3}, 0.5));
  const double total = detector_consistency_loss(det, img, {}, {}, &parts).item();
  EXPECT_EQ(parts.box.item(), 0.0);
  EXPECT_EQ(parts.dfl.item(), 0.0);
  EXPECT_EQ(parts.positives, 0);
  const DenseDetections dense = det.dense_forward(img);
  const Tensor obj = dense.objectness.value();
  EXPECT_NEAR(parts.cls.item(), oracle::bce_with_logits(obj.values(), std::vector<double>(obj.size(), 0.0)), 1e-12);
  EXPECT_NEAR(total, 0.5 * parts.cls.item(), 1e-12);
}

TEST(Detector, WeightedSumAndFrozenGradients) {
  ToyDetector det;
  det.set_frozen(true);
  const std::uint64_t digest = det.digest();
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5; ++t) {
    ad::Var img = ad::parameter(random_tensor(rng, {32, 32, 3}, 0, 1));
    const AnnotationSet targets{ped(4, 2, 12, 22), ped(18, 6, 28, 30)};
    DetectorLosses parts;
    const ad::Var total = detector_consistency_loss(det, img, targets, {}, &parts);
    // First box holds no cell centre and falls back to its centre cell; the
    // second covers the cells centred at x = 20, y = 12, 20, 28.
    EXPECT_EQ(parts.positives, 4);
    EXPECT_NEAR(total.item(), 7.5 * parts.box.item() + 0.5 * parts.cls.item() + 1.5 * parts.dfl.item(), 1e-12);
    ad::backward(total);
    EXPECT_GT(std::abs(img.grad().sum()) + img.grad().values()[0], 0.0);
    for (const ad::Var& p : det.parameters()) EXPECT_FALSE(p.grad().size() && p.grad().sum() != 0.0);
  }
  EXPECT_EQ(det.digest(), digest);
}

TEST(Detector, ImageGradientMatchesFiniteDifferences) {
  ToyDetector det;
  det.set_frozen(true);
  std::mt19937_64 rng(9);
  ad::Var img = ad::parameter(random_tensor(rng, {8, 8, 3}, 0, 1));
  const AnnotationSet targets{ped(1, 1, 6, 7)};
  const auto r = check_gradient([&] { return detector_consistency_loss(det, img, targets, {}); }, img);
  EXPECT_EQ(r.failures, 0) << r.max_rel;
}

TEST(Detector, PositivesCoverBoxInteriorsAndSkipIgnored) {
  ToyDetector det;
  det.set_frozen(true);
  const ad::Var img = ad::constant(Tensor({32, 32, 3}, 0.5));
  DetectorLosses parts;
  // Cell centres sit at 4, 12, 20, 28; the box covers x = 12, 20 and y = 4, 12, 20.
  detector_consistency_loss(det, img, {ped(9, 1, 23, 23)}, {}, &parts);
  EXPECT_EQ(parts.positives, 6);
  AnnotationSet ignored{ped(9, 1, 23, 23)};
  ignored[0].ignore = true;
  detector_consistency_loss(det, img, ignored, {}, &parts);
  EXPECT_EQ(parts.positives, 0);
  // Nested boxes: the smaller one claims the shared cells, the larger keeps the rest.
  detector_consistency_loss(det, img, {ped(1, 1, 31, 31), ped(9, 9, 15, 15)}, {}, &parts);
  EXPECT_EQ(parts.positives, 16);
}

TEST(Detector, JsonRoundTrip) {
  const ToyDetector a(21);
  const ToyDetector b = ToyDetector::from_json(a.to_json());
  EXPECT_EQ(a.digest(), b.digest());
}

TEST(TotalLoss, Examples) {
  const RampSchedule ramp;
  const LossWeights w;
  auto c = [](double v) { return ad::constant_scalar(v); };
  EXPECT_EQ(total_loss({c(0), c(0), c(0), c(0), c(0)}, w, ramp, 100).item(), 0.0);
  EXPECT_NEAR(total_loss({c(3), c(4), c(2), c(5), c(7)}, w, ramp, 0).item(), 0.5 * 2 + 0.1 * 5 + 0.01 * 7, 1e-15);
  LossReport rep;
  EXPECT_NEAR(total_loss({c(1), c(1), c(1), c(1), c(1)}, w, ramp, 12000, &rep).item(), 2.61, 1e-12);
  EXPECT_EQ(rep.entries.size(), 5u);
  EXPECT_EQ(rep.entries[2].name, "det");
  EXPECT_EQ(rep.entries[0].weight, 1.0);
  EXPECT_EQ(rep.to_json().dump(),
            R"({"step":12000,"components":{"src":1.0,"hdce":1.0,"det":1.0,"idt":1.0,"adv":1.0},)"
            R"("weights":{"src":1.0,"hdce":1.0,"det":0.5,"idt":0.1,"adv":0.01},"total":2.61})");
  LossWeights bad;
  bad.idt = -1;
  EXPECT_THROW(total_loss({c(1), c(1), c(1), c(1), c(1)}, bad, ramp, 0), Error);
}

TEST(TotalLoss, LinearInEachComponentMatchesOracle) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 3);
  const RampSchedule ramp{100};
  const LossWeights w;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> raw(5);
    for (double& v : raw) v = u(rng);
    const long step = t * 3;
    std::vector<ad::Var> vars;
    for (double v : raw) vars.push_back(ad::parameter(Tensor::scalar(v)));
    const ad::Var tot = total_loss({vars[0], vars[1], vars[2], vars[3], vars[4]}, w, ramp, step);
    EXPECT_NEAR(tot.item(), oracle::total(raw, {1.0, 1.0, 0.5, 0.1, 0.01}, step, 100), 1e-12);
    ad::backward(tot);
    const double r = oracle::ramp(step, 100);
    EXPECT_EQ(vars[0].grad()[0], r);
    EXPECT_EQ(vars[2].grad()[0], 0.5);
    EXPECT_EQ(vars[4].grad()[0], 0.01);
  }
}
