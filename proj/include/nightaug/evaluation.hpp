// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Pedestrian detection metrics (greedy matching, log-average miss rate over
// an FPPI range), Frechet distance between feature Gaussians, sliced
// 1-Wasserstein distance, and the evaluation report format.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nightaug/core_model.hpp"

namespace nightaug {

enum class MatchStatus { kTruePositive, kFalsePositive, kIgnored };

struct MatchResult {
  std::vector<Detection> detections;   // in matching order (descending score)
  std::vector<MatchStatus> status;     // per detection
  std::vector<int> matched_gt;         // gt index per detection or -1
  int tp = 0, fp = 0, fn = 0;
};

/// Greedy matching of one image's detections in descending score order
/// (ties by box coordinates). Each non-ignored ground truth is matched at
/// most once, to the unmatched one with highest IoU >= threshold; a detection
/// that only overlaps ignored ground truths is neither TP nor FP. Identical
/// duplicate detections are rejected.
MatchResult match_detections(const std::vector<Detection>& detections,
                             const AnnotationSet& ground_truth, double iou_threshold = 0.5);

/// Orders detections by descending score, then image id, then box.
void sort_detections(std::vector<Detection>& detections);

struct SubsetSpec {
  std::string name;
  double min_height = 0.0;
  double max_height = std::numeric_limits<double>::infinity();  // exclusive
  double min_occlusion = 0.0;
  double max_occlusion = 1.0;  // exclusive

  void validate() const;
  bool contains(const ObjectAnnotation& a) const;
};

SubsetSpec reasonable_subset();
SubsetSpec small_subset();
SubsetSpec heavy_subset();
SubsetSpec all_subset();
std::vector<SubsetSpec> standard_subsets();
SubsetSpec subset_by_name(std::string_view name);

struct SubsetPartition {
  AnnotationSet evaluable;
  AnnotationSet ignored;
};

/// Pedestrians inside the spec's bounds stay evaluable; everything else is
/// flagged ignore.
SubsetPartition subset_filter(const AnnotationSet& annotations, const SubsetSpec& spec);
/// Same filtering, returned as one set with ignore flags applied.
AnnotationSet apply_subset(const AnnotationSet& annotations, const SubsetSpec& spec);

struct EvalImage {
  std::string image_id;
  AnnotationSet ground_truth;
};

struct CurvePoint {
  double score = 0.0;
  double fppi = 0.0;
  double miss_rate = 1.0;
};

struct LamrOptions {
  double iou_threshold = 0.5;
  int fppi_points = 9;
  double fppi_min = 1e-2;
  double fppi_max = 1.0;
  double miss_floor = 1e-10;
};

struct EvalCurve {
  std::string subset;
  std::vector<CurvePoint> points;      // one per distinct score, descending
  std::vector<double> reference_fppi;
  std::vector<double> reference_miss;
  double lamr = 1.0;
  int num_images = 0;
  int num_ground_truth = 0;
};

std::vector<double> log_spaced(double lo, double hi, int count);

/// Log-average miss rate of `detections` over `images` after applying the
/// subset filter. Detections on images not in the set are rejected.
EvalCurve lamr(const std::vector<Detection>& detections, const std::vector<EvalImage>& images,
               const SubsetSpec& subset, const LamrOptions& options = {});

struct FeatureGaussian {
  std::vector<double> mean;
  std::vector<double> covariance;  // row-major d x d
  int count = 0;

  int dims() const { return static_cast<int>(mean.size()); }
};

/// Sample mean and unbiased covariance of n x d features (row-major),
/// symmetrised with negative eigenvalues clamped to 0.
FeatureGaussian fit_gaussian(const std::vector<std::vector<double>>& features);

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}).
double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b);

/// Exact 1-Wasserstein distance between two 1-D empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// Mean 1-D W1 over `num_projections` seeded random unit directions.
double sliced_wasserstein(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b, int num_projections,
                          std::uint64_t seed);

struct ReferenceValue {
  std::string table;
  std::string key;
  std::string metric;
  double value = 0.0;
  friend bool operator==(const ReferenceValue&, const ReferenceValue&) = default;
};

/// Reference numbers from the published comparison tables.
std::vector<ReferenceValue> builtin_reference_table();
std::vector<ReferenceValue> parse_reference_table(std::string_view json_text);
std::vector<ReferenceValue> load_reference_table(const std::filesystem::path& path);

struct SubsetResult {
  std::string subset;
  double lamr = 1.0;
  int num_images = 0;
  int num_ground_truth = 0;
  friend bool operator==(const SubsetResult&, const SubsetResult&) = default;
};

struct ReportDelta {
  std::string key;
  std::string metric;
  double measured = 0.0;
  double reference = 0.0;
  double delta = 0.0;
  friend bool operator==(const ReportDelta&, const ReportDelta&) = default;
};

struct EvaluationReport {
  std::string extractor;
  std::string config_hash;
  std::vector<SubsetResult> lamr;
  std::optional<double> fid;
  std::optional<double> wd;
  std::vector<ReferenceValue> references;
  std::vector<ReportDelta> deltas;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

/// Assembles a report. LAMR enters deltas in percent; `compare_keys` selects
/// which reference rows are compared (metric names "fid", "wd" and
/// "lamr_<subset>").
EvaluationReport build_report(const std::vector<EvalCurve>& curves, std::optional<double> fid,
                              std::optional<double> wd,
                              const std::vector<ReferenceValue>& references,
                              const std::vector<std::string>& compare_keys,
                              std::string extractor, std::string config_hash);

std::string serialize_report(const EvaluationReport& report);
EvaluationReport parse_report(std::string_view text);

/// Line-delimited {image_id, x0, y0, x1, y1, score} records.
std::string serialize_detections(const std::vector<Detection>& detections);
std::vector<Detection> parse_detections(std::string_view text);

}  // namespace nightaug
