// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "nightaug/error.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {

using ojson = nlohmann::ordered_json;

namespace {

auto box_key(const BoundingBox& b) { return std::make_tuple(b.x0, b.y0, b.x1, b.y1); }

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  return box_key(a.box) < box_key(b.box);
}

}  // namespace

void sort_detections(std::vector<Detection>& detections) {
  std::sort(detections.begin(), detections.end(), detection_before);
}

MatchResult match_detections(const std::vector<Detection>& detections,
                             const AnnotationSet& ground_truth, double iou_threshold) {
  require(iou_threshold > 0.0 && iou_threshold <= 1.0, ErrorCode::kOutOfRange,
          "IoU threshold must lie in (0, 1]");
  MatchResult r;
  r.detections = detections;
  for (const Detection& d : r.detections) d.validate();
  sort_detections(r.detections);
  for (std::size_t i = 1; i < r.detections.size(); ++i)
    require(!(r.detections[i] == r.detections[i - 1]), ErrorCode::kInvalidArgument,
            "duplicate detection on image " + r.detections[i].image_id);
  std::vector<bool> used(ground_truth.size(), false);
  for (const Detection& d : r.detections) {
    int best = -1;
    double best_iou = iou_threshold;
    bool hits_ignored = false;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      const double o = iou(d.box, ground_truth[g].box);
      if (o < iou_threshold) continue;
      if (ground_truth[g].ignore) {
        hits_ignored = true;
        continue;
      }
      if (used[g]) continue;
      if (o >= best_iou && (best < 0 || o > best_iou)) {
        best = static_cast<int>(g);
        best_iou = o;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      r.status.push_back(MatchStatus::kTruePositive);
      r.matched_gt.push_back(best);
      ++r.tp;
    } else if (hits_ignored) {
      r.status.push_back(MatchStatus::kIgnored);
      r.matched_gt.push_back(-1);
    } else {
      r.status.push_back(MatchStatus::kFalsePositive);
      r.matched_gt.push_back(-1);
      ++r.fp;
    }
  }
  for (std::size_t g = 0; g < ground_truth.size(); ++g)
    if (!ground_truth[g].ignore && !used[g]) ++r.fn;
  return r;
}

void SubsetSpec::validate() const {
  require(min_height >= 0.0 && min_height < max_height && min_occlusion >= 0.0 &&
              min_occlusion < max_occlusion,
          ErrorCode::kInvalidArgument, "subset " + name + " has ill-ordered bounds");
}

bool SubsetSpec::contains(const ObjectAnnotation& a) const {
  const double h = a.box.height();
  return h >= min_height && h < max_height && a.occlusion >= min_occlusion &&
         a.occlusion < max_occlusion;
}

SubsetSpec reasonable_subset() { return {"Reasonable", 40.0, std::numeric_limits<double>::infinity(), 0.0, 0.4}; }
SubsetSpec small_subset() { return {"Small", 30.0, 60.0, 0.0, 0.4}; }
SubsetSpec heavy_subset() { return {"Heavy", 40.0, std::numeric_limits<double>::infinity(), 0.4, 0.8}; }
SubsetSpec all_subset() { return {"All", 20.0, std::numeric_limits<double>::infinity(), 0.0, 0.8}; }

std::vector<SubsetSpec> standard_subsets() {
  return {reasonable_subset(), small_subset(), heavy_subset(), all_subset()};
}

SubsetSpec subset_by_name(std::string_view name) {
  std::string lower(name);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const SubsetSpec& s : standard_subsets()) {
    std::string n = s.name;
    for (char& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (n == lower) return s;
  }
  fail(ErrorCode::kInvalidArgument, "unknown subset '" + std::string(name) + "'");
}

SubsetPartition subset_filter(const AnnotationSet& annotations, const SubsetSpec& spec) {
  spec.validate();
  SubsetPartition p;
  for (ObjectAnnotation a : annotations) {
    if (!a.ignore && a.label == kPedestrianLabel && spec.contains(a)) {
      p.evaluable.push_back(a);
    } else {
      a.ignore = true;
      p.ignored.push_back(a);
    }
  }
  return p;
}

AnnotationSet apply_subset(const AnnotationSet& annotations, const SubsetSpec& spec) {
  spec.validate();
  AnnotationSet out = annotations;
  for (ObjectAnnotation& a : out)
    if (a.ignore || a.label != kPedestrianLabel || !spec.contains(a)) a.ignore = true;
  return out;
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  require(lo > 0.0 && hi > lo && count >= 2, ErrorCode::kInvalidArgument,
          "log_spaced needs 0 < lo < hi and count >= 2");
  std::vector<double> out;
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (count - 1)));
  return out;
}

EvalCurve lamr(const std::vector<Detection>& detections, const std::vector<EvalImage>& images,
               const SubsetSpec& subset, const LamrOptions& options) {
  require(!images.empty(), ErrorCode::kUndefinedMetric, "LAMR over an empty image set");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < images.size(); ++i)
    require(index.emplace(images[i].image_id, i).second, ErrorCode::kInvalidArgument,
            "duplicate evaluation image " + images[i].image_id);
  std::vector<std::vector<Detection>> per_image(images.size());
  for (const Detection& d : detections) {
    auto it = index.find(d.image_id);
    require(it != index.end(), ErrorCode::kInvalidArgument,
            "detection on image " + d.image_id + " outside the evaluation set");
    per_image[it->second].push_back(d);
  }
  EvalCurve curve;
  curve.subset = subset.name;
  curve.num_images = static_cast<int>(images.size());
  // Greedy matching in score order is prefix-consistent, so one pass per
  // image labels every detection for every threshold.
  struct Labeled {
    Detection det;
    MatchStatus status;
  };
  std::vector<Labeled> all;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const AnnotationSet gts = apply_subset(images[i].ground_truth, subset);
    for (const ObjectAnnotation& a : gts)
      if (!a.ignore) ++curve.num_ground_truth;
    const MatchResult m = match_detections(per_image[i], gts, options.iou_threshold);
    for (std::size_t k = 0; k < m.detections.size(); ++k) all.push_back({m.detections[k], m.status[k]});
  }
  require(curve.num_ground_truth > 0, ErrorCode::kUndefinedMetric,
          "no evaluable ground truth in subset " + subset.name);
  std::sort(all.begin(), all.end(),
            [](const Labeled& a, const Labeled& b) { return detection_before(a.det, b.det); });
  int tp = 0, fp = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (all[k].status == MatchStatus::kTruePositive) ++tp;
    if (all[k].status == MatchStatus::kFalsePositive) ++fp;
    if (k + 1 < all.size() && all[k + 1].det.score == all[k].det.score) continue;
    curve.points.push_back({all[k].det.score, static_cast<double>(fp) / curve.num_images,
                            1.0 - static_cast<double>(tp) / curve.num_ground_truth});
  }
  curve.reference_fppi = log_spaced(options.fppi_min, options.fppi_max, options.fppi_points);
  double log_sum = 0.0;
  for (double ref : curve.reference_fppi) {
    double miss = 1.0;
    double best_fppi = -1.0;
    for (const CurvePoint& p : curve.points)
      if (p.fppi <= ref && (p.fppi > best_fppi || (p.fppi == best_fppi && p.miss_rate < miss))) {
        best_fppi = p.fppi;
        miss = p.miss_rate;
      }
    curve.reference_miss.push_back(miss);
    log_sum += std::log(std::max(miss, options.miss_floor));
  }
  curve.lamr = std::exp(log_sum / static_cast<double>(curve.reference_fppi.size()));
  return curve;
}

FeatureGaussian fit_gaussian(const std::vector<std::vector<double>>& features) {
  require(features.size() >= 2, ErrorCode::kInvalidArgument,
          "fit_gaussian needs at least two samples");
  const std::size_t d = features[0].size();
  require(d >= 1, ErrorCode::kShapeMismatch, "fit_gaussian: empty feature vectors");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i) {
    require(features[i].size() == d, ErrorCode::kShapeMismatch,
            "fit_gaussian: ragged feature matrix");
    for (std::size_t j = 0; j < d; ++j) {
      require(std::isfinite(features[i][j]), ErrorCode::kNonFinite, "fit_gaussian: non-finite feature");
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i][j];
    }
  }
  const Eigen::VectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(features.size() - 1);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
    cov = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose());
  }
  FeatureGaussian g;
  g.count = static_cast<int>(features.size());
  g.mean.assign(mu.data(), mu.data() + mu.size());
  g.covariance.resize(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      g.covariance[i * d + j] = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return g;
}

double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b) {
  require(a.dims() == b.dims() && a.dims() > 0, ErrorCode::kShapeMismatch,
          "frechet_distance: dimension mismatch");
  const int d = a.dims();
  require(a.covariance.size() == static_cast<std::size_t>(d * d) &&
              b.covariance.size() == static_cast<std::size_t>(d * d),
          ErrorCode::kShapeMismatch, "frechet_distance: covariance size mismatch");
  const Eigen::Map<const Eigen::VectorXd> m1(a.mean.data(), d), m2(b.mean.data(), d);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      s1(a.covariance.data(), d, d), s2(b.covariance.data(), d, d);
  Eigen::MatrixXd c1 = 0.5 * (s1 + s1.transpose());
  Eigen::MatrixXd c2 = 0.5 * (s2 + s2.transpose());
  // Tr (S1 S2)^{1/2} = Tr (S1^{1/2} S2 S1^{1/2})^{1/2}, both symmetric.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(c1);
  const Eigen::VectorXd r1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root1 = e1.eigenvectors() * r1.asDiagonal() * e1.eigenvectors().transpose();
  Eigen::MatrixXd inner = root1 * c2 * root1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(inner);
  const Eigen::VectorXd lam = e2.eigenvalues();
  const double scale = std::max(1e-300, lam.cwiseAbs().maxCoeff());
  require(lam.minCoeff() >= -1e-6 * scale, ErrorCode::kNumericalInstability,
          "frechet_distance: covariance product has a negative eigenvalue " +
              std::to_string(lam.minCoeff()));
  const double tr_sqrt = lam.cwiseMax(0.0).cwiseSqrt().sum();
  const double fd = (m1 - m2).squaredNorm() + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, fd);
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorCode::kInvalidArgument,
          "wasserstein distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  // Integrate |F_a^{-1}(u) - F_b^{-1}(u)| over the merged quantile breakpoints.
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / n;
    const double next_b = static_cast<double>(j + 1) / m;
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    // Exact fraction comparison avoids drift when breakpoints coincide.
    const auto ia = (i + 1) * b.size(), jb = (j + 1) * a.size();
    if (ia <= jb) ++i;
    if (jb <= ia) ++j;
  }
  return total;
}

double sliced_wasserstein(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b, int num_projections,
                          std::uint64_t seed) {
  require(!a.empty() && !b.empty(), ErrorCode::kInvalidArgument,
          "sliced wasserstein of an empty feature set");
  require(num_projections >= 1, ErrorCode::kInvalidArgument, "need at least one projection");
  const std::size_t d = a[0].size();
  for (const auto& r : a)
    require(r.size() == d, ErrorCode::kShapeMismatch, "sliced wasserstein: ragged features");
  for (const auto& r : b)
    require(r.size() == d, ErrorCode::kShapeMismatch, "sliced wasserstein: dimension mismatch");
  Rng rng = Rng(seed).derive("sliced-wasserstein");
  double total = 0.0;
  std::vector<double> dir(d), pa(a.size()), pb(b.size());
  for (int p = 0; p < num_projections; ++p) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a[i][k] * dir[k];
      pa[i] = s;
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += b[i][k] * dir[k];
      pb[i] = s;
    }
    total += wasserstein_1d(pa, pb);
  }
  return total / num_projections;
}

std::vector<ReferenceValue> builtin_reference_table() {
  return {
      {"I", "instructpix2pix", "fid", 64.11},
      {"I", "instructpix2pix", "wd", 31.8},
      {"I", "cyclegan-turbo", "fid", 38.36},
      {"I", "cyclegan-turbo", "wd", 37.4},
      {"I", "contrastive-sdxl", "fid", 22.57},
      {"I", "contrastive-sdxl", "wd", 11.27},
      {"I", "ecp-day-vs-night", "wd", 34.8},
      {"I", "ecp-night-subsets", "wd", 5.6},
      {"II", "pedestron/baseline/day", "lamr_reasonable", 4.0},
      {"II", "pedestron/baseline/day", "lamr_small", 10.0},
      {"II", "pedestron/baseline/day", "lamr_heavy", 24.0},
      {"II", "pedestron/baseline/day", "lamr_all", 14.0},
      {"II", "pedestron/baseline/night", "lamr_reasonable", 11.0},
      {"II", "pedestron/baseline/night", "lamr_small", 17.0},
      {"II", "pedestron/baseline/night", "lamr_heavy", 31.0},
      {"II", "pedestron/baseline/night", "lamr_all", 20.0},
      {"II", "pedestron/contrastive-sdxl/0", "lamr_reasonable", 9.0},
      {"II", "pedestron/contrastive-sdxl/0", "lamr_small", 14.0},
      {"II", "pedestron/contrastive-sdxl/0", "lamr_heavy", 25.0},
      {"II", "pedestron/contrastive-sdxl/0", "lamr_all", 16.0},
      {"II", "pedestron/contrastive-sdxl/5", "lamr_reasonable", 8.0},
      {"II", "pedestron/contrastive-sdxl/5", "lamr_small", 12.0},
      {"II", "pedestron/contrastive-sdxl/5", "lamr_heavy", 25.0},
      {"II", "pedestron/contrastive-sdxl/5", "lamr_all", 15.0},
      {"II", "pedestron/contrastive-sdxl/10", "lamr_reasonable", 8.0},
      {"II", "pedestron/contrastive-sdxl/10", "lamr_small", 11.0},
      {"II", "pedestron/contrastive-sdxl/10", "lamr_heavy", 24.0},
      {"II", "pedestron/contrastive-sdxl/10", "lamr_all", 15.0},
      {"II", "pedestron/contrastive-sdxl/20", "lamr_reasonable", 8.0},
      {"II", "pedestron/contrastive-sdxl/20", "lamr_small", 11.0},
      {"II", "pedestron/contrastive-sdxl/20", "lamr_heavy", 23.0},
      {"II", "pedestron/contrastive-sdxl/20", "lamr_all", 14.0},
      {"II", "pedestron/cyclegan-turbo/0", "lamr_reasonable", 14.0},
      {"II", "pedestron/cyclegan-turbo/0", "lamr_small", 18.0},
      {"II", "pedestron/cyclegan-turbo/0", "lamr_heavy", 31.0},
      {"II", "pedestron/cyclegan-turbo/0", "lamr_all", 21.0},
      {"II", "pedestron/cyclegan-turbo/5", "lamr_reasonable", 11.0},
      {"II", "pedestron/cyclegan-turbo/5", "lamr_small", 17.0},
      {"II", "pedestron/cyclegan-turbo/5", "lamr_heavy", 29.0},
      {"II", "pedestron/cyclegan-turbo/5", "lamr_all", 18.0},
      {"II", "pedestron/cyclegan-turbo/10", "lamr_reasonable", 10.0},
      {"II", "pedestron/cyclegan-turbo/10", "lamr_small", 16.0},
      {"II", "pedestron/cyclegan-turbo/10", "lamr_heavy", 26.0},
      {"II", "pedestron/cyclegan-turbo/10", "lamr_all", 17.0},
      {"II", "pedestron/cyclegan-turbo/20", "lamr_reasonable", 9.0},
      {"II", "pedestron/cyclegan-turbo/20", "lamr_small", 15.0},
      {"II", "pedestron/cyclegan-turbo/20", "lamr_heavy", 26.0},
      {"II", "pedestron/cyclegan-turbo/20", "lamr_all", 16.0},
      {"II", "pedestron/instructpix2pix/0", "lamr_reasonable", 28.0},
      {"II", "pedestron/instructpix2pix/0", "lamr_small", 31.0},
      {"II", "pedestron/instructpix2pix/0", "lamr_heavy", 46.0},
      {"II", "pedestron/instructpix2pix/0", "lamr_all", 37.0},
      {"II", "pedestron/instructpix2pix/5", "lamr_reasonable", 16.0},
      {"II", "pedestron/instructpix2pix/5", "lamr_small", 22.0},
      {"II", "pedestron/instructpix2pix/5", "lamr_heavy", 41.0},
      {"II", "pedestron/instructpix2pix/5", "lamr_all", 25.0},
      {"II", "pedestron/instructpix2pix/10", "lamr_reasonable", 12.0},
      {"II", "pedestron/instructpix2pix/10", "lamr_small", 18.0},
      {"II", "pedestron/instructpix2pix/10", "lamr_heavy", 33.0},
      {"II", "pedestron/instructpix2pix/10", "lamr_all", 20.0},
      {"II", "pedestron/instructpix2pix/20", "lamr_reasonable", 12.0},
      {"II", "pedestron/instructpix2pix/20", "lamr_small", 15.0},
      {"II", "pedestron/instructpix2pix/20", "lamr_heavy", 31.0},
      {"II", "pedestron/instructpix2pix/20", "lamr_all", 19.0},
      {"II", "pedestron/target/100", "lamr_reasonable", 7.0},
      {"II", "pedestron/target/100", "lamr_small", 11.0},
      {"II", "pedestron/target/100", "lamr_heavy", 22.0},
      {"II", "pedestron/target/100", "lamr_all", 14.0},
      {"II", "yolo/baseline/day", "lamr_reasonable", 4.0},
      {"II", "yolo/baseline/day", "lamr_small", 11.0},
      {"II", "yolo/baseline/day", "lamr_heavy", 22.0},
      {"II", "yolo/baseline/day", "lamr_all", 15.0},
      {"II", "yolo/baseline/night", "lamr_reasonable", 10.0},
      {"II", "yolo/baseline/night", "lamr_small", 17.0},
      {"II", "yolo/baseline/night", "lamr_heavy", 36.0},
      {"II", "yolo/baseline/night", "lamr_all", 19.0},
      {"II", "yolo/contrastive-sdxl/0", "lamr_reasonable", 9.0},
      {"II", "yolo/contrastive-sdxl/0", "lamr_small", 16.0},
      {"II", "yolo/contrastive-sdxl/0", "lamr_heavy", 33.0},
      {"II", "yolo/contrastive-sdxl/0", "lamr_all", 18.0},
      {"II", "yolo/contrastive-sdxl/5", "lamr_reasonable", 9.0},
      {"II", "yolo/contrastive-sdxl/5", "lamr_small", 14.0},
      {"II", "yolo/contrastive-sdxl/5", "lamr_heavy", 31.0},
      {"II", "yolo/contrastive-sdxl/5", "lamr_all", 17.0},
      {"II", "yolo/cyclegan-turbo/0", "lamr_reasonable", 12.0},
      {"II", "yolo/cyclegan-turbo/0", "lamr_small", 20.0},
      {"II", "yolo/cyclegan-turbo/0", "lamr_heavy", 35.0},
      {"II", "yolo/cyclegan-turbo/0", "lamr_all", 21.0},
      {"II", "yolo/cyclegan-turbo/5", "lamr_reasonable", 11.0},
      {"II", "yolo/cyclegan-turbo/5", "lamr_small", 18.0},
      {"II", "yolo/cyclegan-turbo/5", "lamr_heavy", 33.0},
      {"II", "yolo/cyclegan-turbo/5", "lamr_all", 21.0},
      {"II", "yolo/instructpix2pix/0", "lamr_reasonable", 18.0},
      {"II", "yolo/instructpix2pix/0", "lamr_small", 30.0},
      {"II", "yolo/instructpix2pix/0", "lamr_heavy", 45.0},
      {"II", "yolo/instructpix2pix/0", "lamr_all", 29.0},
      {"II", "yolo/instructpix2pix/5", "lamr_reasonable", 15.0},
      {"II", "yolo/instructpix2pix/5", "lamr_small", 22.0},
      {"II", "yolo/instructpix2pix/5", "lamr_heavy", 40.0},
      {"II", "yolo/instructpix2pix/5", "lamr_all", 25.0},
      {"II", "yolo/target/100", "lamr_reasonable", 7.0},
      {"II", "yolo/target/100", "lamr_small", 13.0},
      {"II", "yolo/target/100", "lamr_heavy", 28.0},
      {"II", "yolo/target/100", "lamr_all", 16.0},
  };
}

std::vector<ReferenceValue> parse_reference_table(std::string_view json_text) {
  ojson doc;
  try {
    doc = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("reference table: ") + e.what());
  }
  std::vector<ReferenceValue> out;
  for (const auto& r : doc.at("references"))
    out.push_back({r.at("table").get<std::string>(), r.at("key").get<std::string>(),
                   r.at("metric").get<std::string>(), r.at("value").get<double>()});
  return out;
}

std::vector<ReferenceValue> load_reference_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_reference_table(ss.str());
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

EvaluationReport build_report(const std::vector<EvalCurve>& curves, std::optional<double> fid,
                              std::optional<double> wd,
                              const std::vector<ReferenceValue>& references,
                              const std::vector<std::string>& compare_keys,
                              std::string extractor, std::string config_hash) {
  EvaluationReport r;
  r.extractor = std::move(extractor);
  r.config_hash = std::move(config_hash);
  for (const EvalCurve& c : curves)
    r.lamr.push_back({c.subset, c.lamr, c.num_images, c.num_ground_truth});
  r.fid = fid;
  r.wd = wd;
  r.references = references;
  for (const std::string& key : compare_keys) {
    bool found = false;
    for (const ReferenceValue& ref : references) {
      if (ref.key != key) continue;
      found = true;
      std::optional<double> measured;
      if (ref.metric == "fid") measured = fid;
      if (ref.metric == "wd") measured = wd;
      for (const SubsetResult& s : r.lamr)
        if (ref.metric == "lamr_" + lower(s.subset)) measured = 100.0 * s.lamr;
      if (measured) r.deltas.push_back({key, ref.metric, *measured, ref.value, *measured - ref.value});
    }
    require(found, ErrorCode::kInvalidArgument, "no reference rows for key '" + key + "'");
  }
  return r;
}

namespace {

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> read_optional(const ojson& j, const char* key) {
  const ojson& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

std::string serialize_report(const EvaluationReport& r) {
  ojson doc;
  doc["format"] = "nightaug-eval-report-v1";
  doc["extractor"] = r.extractor;
  doc["config_hash"] = r.config_hash;
  ojson metrics;
  metrics["lamr"] = ojson::array();
  for (const SubsetResult& s : r.lamr)
    metrics["lamr"].push_back({{"subset", s.subset},
                               {"lamr", s.lamr},
                               {"num_images", s.num_images},
                               {"num_ground_truth", s.num_ground_truth}});
  metrics["fid"] = optional_number(r.fid);
  metrics["wd"] = optional_number(r.wd);
  doc["metrics"] = std::move(metrics);
  doc["references"] = ojson::array();
  for (const ReferenceValue& v : r.references)
    doc["references"].push_back(
        {{"table", v.table}, {"key", v.key}, {"metric", v.metric}, {"value", v.value}});
  doc["deltas"] = ojson::array();
  for (const ReportDelta& d : r.deltas)
    doc["deltas"].push_back({{"key", d.key},
                             {"metric", d.metric},
                             {"measured", d.measured},
                             {"reference", d.reference},
                             {"delta", d.delta}});
  return doc.dump(2) + "\n";
}

EvaluationReport parse_report(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("evaluation report: ") + e.what());
  }
  try {
    EvaluationReport r;
    r.extractor = doc.at("extractor").get<std::string>();
    r.config_hash = doc.at("config_hash").get<std::string>();
    const ojson& m = doc.at("metrics");
    for (const auto& s : m.at("lamr"))
      r.lamr.push_back({s.at("subset").get<std::string>(), s.at("lamr").get<double>(),
                        s.at("num_images").get<int>(), s.at("num_ground_truth").get<int>()});
    r.fid = read_optional(m, "fid");
    r.wd = read_optional(m, "wd");
    for (const auto& v : doc.at("references"))
      r.references.push_back({v.at("table").get<std::string>(), v.at("key").get<std::string>(),
                              v.at("metric").get<std::string>(), v.at("value").get<double>()});
    for (const auto& d : doc.at("deltas"))
      r.deltas.push_back({d.at("key").get<std::string>(), d.at("metric").get<std::string>(),
                          d.at("measured").get<double>(), d.at("reference").get<double>(),
                          d.at("delta").get<double>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("evaluation report: ") + e.what());
  }
}

std::string serialize_detections(const std::vector<Detection>& detections) {
  std::string out;
  for (const Detection& d : detections) {
    ojson j;
    j["image_id"] = d.image_id;
    j["x0"] = d.box.x0;
    j["y0"] = d.box.y0;
    j["x1"] = d.box.x1;
    j["y1"] = d.box.y1;
    j["score"] = d.score;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Detection> parse_detections(std::string_view text) {
  std::vector<Detection> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const ojson j = ojson::parse(line);
      Detection d;
      d.image_id = j.at("image_id").get<std::string>();
      d.box = BoundingBox::make(j.at("x0").get<double>(), j.at("y0").get<double>(),
                                j.at("x1").get<double>(), j.at("y1").get<double>());
      d.score = j.at("score").get<double>();
      d.validate();
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, "detections line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace nightaug
