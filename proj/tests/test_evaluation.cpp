// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nightaug/error.hpp"
#include "nightaug/evaluation.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace nightaug;

namespace {

ObjectAnnotation ped(double x0, double y0, double x1, double y1, double occ = 0.0, bool ignore = false) {
  ObjectAnnotation a;
  a.box = BoundingBox::make(x0, y0, x1, y1);
  a.occlusion = occ;
  a.ignore = ignore;
  return a;
}

Detection det(std::string id, double x0, double y0, double x1, double y1, double s) {
  return {std::move(id), BoundingBox::make(x0, y0, x1, y1), s};
}

std::string golden(const std::string& name) {
  const char* dir = std::getenv("NIGHTAUG_GOLDEN_DIR");
  std::ifstream in(std::string(dir ? dir : "tests/golden") + "/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Two images, one 50 px pedestrian each; a hit at 0.9, a false positive at
// 0.8 and a second hit at 0.7.
std::vector<EvalImage> traced_images() {
  return {{"a", {ped(10, 10, 30, 60)}}, {"b", {ped(40, 20, 60, 70)}}};
}

std::vector<Detection> traced_detections() {
  return {det("a", 10, 10, 30, 60, 0.9), det("b", 0, 0, 10, 10, 0.8), det("b", 41, 20, 60, 70, 0.7)};
}

double w1_oracle(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set<double> cuts{0.0, 1.0};
  for (std::size_t i = 1; i < a.size(); ++i) cuts.insert(static_cast<double>(i) / a.size());
  for (std::size_t j = 1; j < b.size(); ++j) cuts.insert(static_cast<double>(j) / b.size());
  std::vector<double> c(cuts.begin(), cuts.end());
  double s = 0;
  for (std::size_t k = 0; k + 1 < c.size(); ++k) {
    const double mid = 0.5 * (c[k] + c[k + 1]);
    const double qa = a[static_cast<std::size_t>(mid * a.size())];
    const double qb = b[static_cast<std::size_t>(mid * b.size())];
    s += (c[k + 1] - c[k]) * std::abs(qa - qb);
  }
  return s;
}

}  // namespace

TEST(Matching, Examples) {
  const AnnotationSet gt{ped(0, 0, 10, 20)};
  MatchResult m = match_detections({det("x", 0, 0, 10, 20, 0.5)}, gt);
  EXPECT_EQ(m.tp, 1);
  EXPECT_EQ(m.fp, 0);
  EXPECT_EQ(m.fn, 0);
  m = match_detections({}, {ped(0, 0, 1, 1), ped(2, 2, 3, 3), ped(4, 4, 5, 5)});
  EXPECT_EQ(m.fn, 3);
  m = match_detections({det("x", 0, 0, 10, 19, 0.8), det("x", 0, 0, 10, 20, 0.9)}, gt);
  EXPECT_EQ(m.tp, 1);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.detections[0].score, 0.9);
  EXPECT_EQ(m.status[0], MatchStatus::kTruePositive);
  EXPECT_EQ(m.status[1], MatchStatus::kFalsePositive);
}

TEST(Matching, IgnoreRegionsAbsorbDetections) {
  const AnnotationSet gt{ped(0, 0, 10, 20), ped(50, 0, 60, 20, 0, true)};
  const MatchResult m = match_detections({det("x", 50, 0, 60, 20, 0.9), det("x", 20, 0, 30, 20, 0.4)}, gt);
  EXPECT_EQ(m.status[0], MatchStatus::kIgnored);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.fn, 1);
}

TEST(Matching, OrderInvariantAndRejectsDuplicates) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 40);
  AnnotationSet gt;
  std::vector<Detection> dets;
  for (int i = 0; i < 6; ++i) {
    const double x = u(rng), y = u(rng);
    gt.push_back(ped(x, y, x + 10, y + 20));
    dets.push_back(det("x", x + u(rng) / 10, y, x + 10, y + 20, std::round(u(rng)) / 40));
  }
  const MatchResult ref = match_detections(dets, gt);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(dets.begin(), dets.end(), rng);
    const MatchResult m = match_detections(dets, gt);
    EXPECT_EQ(m.detections, ref.detections);
    EXPECT_EQ(m.matched_gt, ref.matched_gt);
  }
  dets.push_back(dets.front());
  EXPECT_THROW(match_detections(dets, gt), Error);
}

TEST(Subsets, Examples) {
  const SubsetSpec r = reasonable_subset();
  EXPECT_EQ(subset_filter({ped(0, 0, 20, 50, 0.1)}, r).evaluable.size(), 1u);
  EXPECT_EQ(subset_filter({ped(0, 0, 10, 20)}, r).ignored.size(), 1u);
  const SubsetPartition empty = subset_filter({}, all_subset());
  EXPECT_TRUE(empty.evaluable.empty() && empty.ignored.empty());
  EXPECT_TRUE(small_subset().contains(ped(0, 0, 10, 45)));
  EXPECT_FALSE(small_subset().contains(ped(0, 0, 10, 60)));
  EXPECT_TRUE(heavy_subset().contains(ped(0, 0, 10, 50, 0.5)));
  EXPECT_FALSE(heavy_subset().contains(ped(0, 0, 10, 50, 0.9)));
  EXPECT_EQ(subset_by_name("reasonable").name, "Reasonable");
  EXPECT_THROW(subset_by_name("occluded-ish"), Error);
  SubsetSpec bad{"bad", 50, 40, 0, 1};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Lamr, HandTracedScenario) {
  const EvalCurve c = lamr(traced_detections(), traced_images(), reasonable_subset());
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[1].fppi, 0.5);
  EXPECT_EQ(c.points[2].miss_rate, 0.0);
  const double expected = std::exp((7 * std::log(0.5) + 2 * std::log(1e-10)) / 9);
  EXPECT_NEAR(c.lamr, expected, 1e-15);
}

TEST(Lamr, ZeroAndPerfectDetections) {
  const auto images = traced_images();
  EXPECT_EQ(lamr({}, images, reasonable_subset()).lamr, 1.0);
  const EvalCurve perfect =
      lamr({det("a", 10, 10, 30, 60, 1.0), det("b", 40, 20, 60, 70, 1.0)}, images, reasonable_subset());
  EXPECT_NEAR(perfect.lamr, 1e-10, 1e-22);
}

TEST(Lamr, UndefinedWithoutGroundTruth) {
  try {
    lamr({}, {{"a", {ped(0, 0, 5, 10)}}}, reasonable_subset());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefinedMetric);
  }
  EXPECT_THROW(lamr({det("zzz", 0, 0, 1, 1, 0.5)}, traced_images(), reasonable_subset()), Error);
}

TEST(Lamr, MatchesExhaustiveThresholdOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int scenario = 0; scenario < 60; ++scenario) {
    const int n_images = 1 + static_cast<int>(u(rng) * 10);
    std::vector<EvalImage> images;
    std::vector<oracle::MicroImage> micro;
    std::vector<Detection> dets;
    int boxes = 0;
    for (int i = 0; i < n_images; ++i) {
      EvalImage im{"img" + std::to_string(i), {}};
      const int n_gt = static_cast<int>(u(rng) * 3);
      for (int g = 0; g < n_gt && boxes < 20; ++g, ++boxes) {
        const double x = u(rng) * 100, y = u(rng) * 50, h = 30 + u(rng) * 40;
        im.ground_truth.push_back(ped(x, y, x + 0.4 * h, y + h, u(rng) < 0.2 ? 0.5 : 0.0, u(rng) < 0.1));
        if (u(rng) < 0.7 && boxes < 20) {
          const double j = u(rng) * 4;
          dets.push_back(det(im.image_id, x + j, y, x + 0.4 * h + j, y + h, std::round(u(rng) * 10) / 10));
        }
      }
      if (u(rng) < 0.5) {
        const double x = u(rng) * 100;
        dets.push_back(det(im.image_id, x, 0, x + 10, 25, std::round(u(rng) * 10) / 10));
      }
      micro.push_back({im.image_id, apply_subset(im.ground_truth, reasonable_subset())});
      images.push_back(std::move(im));
    }
    int evaluable = 0;
    for (const auto& m : micro)
      for (const auto& a : m.gt) evaluable += !a.ignore;
    if (evaluable == 0) continue;
    // identical duplicates are rejected upstream; drop them here
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      return std::tie(a.image_id, a.score, a.box.x0) < std::tie(b.image_id, b.score, b.box.x0);
    });
    dets.erase(std::unique(dets.begin(), dets.end()), dets.end());
    const double got = lamr(dets, images, reasonable_subset()).lamr;
    EXPECT_NEAR(got, oracle::lamr(dets, micro), 1e-12) << "scenario " << scenario;
    EXPECT_GE(got, 1e-10);
    EXPECT_LE(got, 1.0);
  }
}

TEST(Lamr, MonotoneUnderFalsePositivesAndEarlyHits) {
  const auto images = traced_images();
  const double base = lamr(traced_detections(), images, reasonable_subset()).lamr;
  for (double s : {0.95, 0.85, 0.75, 0.5}) {
    auto more = traced_detections();
    more.push_back(det("a", 70, 0, 80, 30, s));
    EXPECT_GE(lamr(more, images, reasonable_subset()).lamr, base);
  }
  // Hitting the second pedestrian above every other score cannot hurt.
  auto better = traced_detections();
  better.push_back(det("b", 40, 20, 60, 70, 0.99));
  EXPECT_LE(lamr(better, images, reasonable_subset()).lamr, base);
}

TEST(Gaussian, FitExamples) {
  const FeatureGaussian c = fit_gaussian({{1, 2}, {1, 2}, {1, 2}});
  EXPECT_EQ(c.mean, (std::vector<double>{1, 2}));
  for (double v : c.covariance) EXPECT_EQ(v, 0.0);
  const FeatureGaussian two = fit_gaussian({{0, 0}, {2, 0}});
  EXPECT_EQ(two.mean, (std::vector<double>{1, 0}));
  EXPECT_NEAR(two.covariance[0], 2.0, 1e-15);
  EXPECT_NEAR(two.covariance[1], 0.0, 1e-15);
  EXPECT_NEAR(two.covariance[3], 0.0, 1e-15);
  const FeatureGaussian p = fit_gaussian({{2, 0}, {0, 0}});
  EXPECT_EQ(p.mean, two.mean);
  EXPECT_THROW(fit_gaussian({{1, 2}}), Error);
}

TEST(Frechet, ClosedForms) {
  FeatureGaussian a{{0, 0}, {1, 0, 0, 1}, 10};
  FeatureGaussian b{{3, -1}, {1, 0, 0, 1}, 10};
  FeatureGaussian c{{0, 0}, {4, 0, 0, 1}, 10};
  EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-9);
  EXPECT_NEAR(frechet_distance(a, b), 10.0, 1e-9);
  EXPECT_NEAR(frechet_distance(a, c), 1.0, 1e-9);
  FeatureGaussian d{{0}, {1}, 2};
  EXPECT_THROW(frechet_distance(a, d), Error);
}

TEST(Frechet, SymmetricNonNegative) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::vector<double>> x(12, std::vector<double>(4)), y(15, std::vector<double>(4));
    for (auto& r : x)
      for (double& v : r) v = n(rng);
    for (auto& r : y)
      for (double& v : r) v = 2 * n(rng) + 0.5;
    const FeatureGaussian gx = fit_gaussian(x), gy = fit_gaussian(y);
    const double ab = frechet_distance(gx, gy), ba = frechet_distance(gy, gx);
    EXPECT_NEAR(ab, ba, 1e-9 * std::max(1.0, ab));
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(frechet_distance(gx, gx), 0.0, 1e-9);
  }
}

TEST(Wasserstein, Examples) {
  EXPECT_NEAR(wasserstein_1d({0, 1}, {2, 3}), 2.0, 1e-15);
  EXPECT_NEAR(sliced_wasserstein({{0}, {1}}, {{2}, {3}}, 16, 1), 2.0, 1e-12);
  EXPECT_EQ(sliced_wasserstein({{0, 1}, {2, 3}}, {{0, 1}, {2, 3}}, 16, 1), 0.0);
  EXPECT_THROW(sliced_wasserstein({}, {{1.0}}, 4, 1), Error);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(1 + t % 5), b(1 + t % 7);
    for (double& v : a) v = u(rng);
    for (double& v : b) v = u(rng);
    EXPECT_NEAR(wasserstein_1d(a, b), w1_oracle(a, b), 1e-12);
  }
}

TEST(Wasserstein, PseudometricAndTranslationBound) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  auto cloud = [&](int count, double shift) {
    std::vector<std::vector<double>> c(static_cast<std::size_t>(count), std::vector<double>(3));
    for (auto& r : c)
      for (double& v : r) v = n(rng) + shift;
    return c;
  };
  for (int t = 0; t < 20; ++t) {
    const auto a = cloud(10, 0), b = cloud(12, 0.5), c = cloud(9, -0.3);
    const double ab = sliced_wasserstein(a, b, 64, 7), ba = sliced_wasserstein(b, a, 64, 7);
    const double ac = sliced_wasserstein(a, c, 64, 7), cb = sliced_wasserstein(c, b, 64, 7);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ab, ac + cb + 1e-12);
    auto shifted = a;
    const std::vector<double> v{0.3, -0.4, 1.2};
    for (auto& r : shifted)
      for (int k = 0; k < 3; ++k) r[k] += v[k];
    const double norm = std::sqrt(0.09 + 0.16 + 1.44);
    EXPECT_LE(sliced_wasserstein(a, shifted, 64, 7), norm + 1e-12);
  }
}

TEST(Report, EmptyCurvesAndZeroDelta) {
  const EvaluationReport r = build_report({}, std::nullopt, std::nullopt, {}, {}, "toy", "h");
  EXPECT_TRUE(r.lamr.empty());
  const std::string text = serialize_report(r);
  EXPECT_NE(text.find("\"metrics\""), std::string::npos);
  EXPECT_EQ(parse_report(text), r);

  const std::vector<ReferenceValue> refs{{"table1", "contrastive-sdxl", "fid", 22.57}};
  const EvaluationReport d = build_report({}, 22.57, std::nullopt, refs, {"contrastive-sdxl"}, "toy", "h");
  ASSERT_EQ(d.deltas.size(), 1u);
  EXPECT_EQ(d.deltas[0].delta, 0.0);
  EXPECT_THROW(build_report({}, 1.0, std::nullopt, refs, {"nope"}, "toy", "h"), Error);
}

TEST(Report, BuiltinReferencesMatchShippedTable) {
  const auto builtin = builtin_reference_table();
  const char* dir = std::getenv("NIGHTAUG_GOLDEN_DIR");
  const auto shipped =
      load_reference_table(std::filesystem::path(dir ? dir : "tests/golden") / ".." / ".." / "configs" / "reference_tables.json");
  ASSERT_EQ(builtin.size(), shipped.size());
  for (std::size_t i = 0; i < builtin.size(); ++i) {
    EXPECT_EQ(builtin[i].key, shipped[i].key);
    EXPECT_EQ(builtin[i].metric, shipped[i].metric);
    EXPECT_EQ(builtin[i].value, shipped[i].value);
  }
  bool found = false;
  for (const auto& r : builtin)
    if (r.key == "contrastive-sdxl" && r.metric == "fid") found = r.value == 22.57;
  EXPECT_TRUE(found);
}

TEST(Report, GoldenToyReport) {
  const EvalCurve all = lamr(traced_detections(), traced_images(), all_subset());
  const EvalCurve reasonable = lamr(traced_detections(), traced_images(), reasonable_subset());
  const std::vector<ReferenceValue> refs{{"table2", "pedestron/baseline/night", "lamr_all", 20.0},
                                         {"table2", "pedestron/baseline/night", "lamr_reasonable", 10.0}};
  const EvaluationReport r =
      build_report({reasonable, all}, 1.5, 0.25, refs, {"pedestron/baseline/night"}, "toy-patch-encoder", "00000000000000ff");
  const std::string want = golden("eval_report.json");
  ASSERT_FALSE(want.empty());
  EXPECT_EQ(serialize_report(r), want);
  EXPECT_EQ(serialize_report(parse_report(want)), want);
}

TEST(Detections, GoldenRoundTrip) {
  const std::string want = golden("detections.jsonl");
  ASSERT_FALSE(want.empty());
  const auto dets = parse_detections(want);
  EXPECT_EQ(dets.size(), 3u);
  EXPECT_EQ(serialize_detections(dets), want);
  EXPECT_EQ(parse_detections(serialize_detections(traced_detections())), traced_detections());
  EXPECT_THROW(parse_detections("{\"image_id\":\"a\"}\n"), Error);
}
