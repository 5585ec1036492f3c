// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Two-stage curation of translated images: a fidelity gate on encoder
// feature similarity with an F1-calibrated threshold, then a pedestrian
// preservation gate that classifies a crop at every inherited box.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nightaug/autodiff.hpp"
#include "nightaug/core_model.hpp"
#include "nightaug/rng.hpp"
#include "nightaug/semantic_encoder.hpp"

namespace nightaug {

struct FidelityScore {
  std::string source_image_id;
  std::string image_id;
  double score = 0.0;
};

/// Final-layer patch features of each image, centred over patches,
/// flattened, compared by cosine similarity. Two flat descriptors score 1;
/// one flat and one structured score 0.
double fidelity_from_features(const Tensor& a, const Tensor& b);
/// `layer` < 0 selects the last block of the default layer rule.
FidelityScore fidelity_score(const SemanticEncoder& encoder, const ImageSample& source,
                             const ImageSample& translated, int layer = -1);

enum class HumanLabel { kAccepted, kRejected };

struct CalibrationPair {
  std::string image_id;
  double score = 0.0;
  HumanLabel label = HumanLabel::kRejected;
};

/// F1 of the accepted class when keeping score >= threshold.
double f1_at(const std::vector<CalibrationPair>& pairs, double threshold);

/// Sweeps the minimum score, all midpoints between consecutive distinct
/// scores, and a value just above the maximum; returns the highest
/// threshold among those with maximal F1.
double calibrate_threshold(const std::vector<CalibrationPair>& pairs);

std::vector<CalibrationPair> parse_calibration(std::string_view text);
std::string serialize_calibration(const std::vector<CalibrationPair>& pairs);

struct Stage1Partition {
  std::vector<FidelityScore> kept;
  std::vector<FidelityScore> discarded;
};

/// Keeps score >= threshold, preserving order.
Stage1Partition stage1_gate(const std::vector<FidelityScore>& scores, double threshold);

struct NegativeCrops {
  std::vector<BoundingBox> crops;
  bool budget_exhausted = false;
};

/// Rejection-samples integer-aligned crops of crop_w x crop_h that do not
/// intersect any annotated box.
NegativeCrops mine_negative_crops(const ImageSample& sample, int crop_w, int crop_h, int count,
                                  Rng& rng, int max_attempts = 10000);

/// Crop at `box` with edge replication outside the image, resized
/// bilinearly to size x size.
Tensor extract_crop(const Tensor& image, const BoundingBox& box, int size);

class PatchClassifier {
 public:
  virtual ~PatchClassifier() = default;
  virtual std::string id() const = 0;
  virtual int input_size() const = 0;
  /// Probability that a crop shows a pedestrian.
  virtual double pedestrian_probability(const Tensor& crop) const = 0;
};

/// Small convolutional crop classifier. Crops are contrast normalised
/// before the network, so a global brightness change leaves the input
/// unchanged.
class ToyPatchClassifier final : public PatchClassifier {
 public:
  static constexpr int kSize = 16;

  explicit ToyPatchClassifier(std::uint64_t seed = 13);

  std::string id() const override { return "toy-patch-classifier-v1"; }
  int input_size() const override { return kSize; }
  double pedestrian_probability(const Tensor& crop) const override;

  ad::Var logit(const Tensor& crop) const;
  std::vector<ad::Var> parameters() const { return params_; }
  nlohmann::ordered_json to_json() const;
  static ToyPatchClassifier from_json(const nlohmann::ordered_json& j);

 private:
  std::vector<ad::Var> params_;
};

struct ClassifierTrainOptions {
  int steps = 1500;
  double learning_rate = 3e-3;
  int negatives_per_image = 4;
};

/// Trains on pedestrian crops (positives) and mined negatives from the
/// samples, with random brightness, contrast and jitter augmentation.
void train_patch_classifier(ToyPatchClassifier& classifier, const std::vector<ImageSample>& samples,
                            const ClassifierTrainOptions& options, Rng& rng);

struct PatchVerdict {
  BoundingBox box;
  bool pedestrian = false;
  double confidence = 0.0;

  friend bool operator==(const PatchVerdict&, const PatchVerdict&) = default;
};

enum class Stage2Outcome { kKept, kDiscarded, kQuarantined };

struct Stage2Result {
  Stage2Outcome outcome = Stage2Outcome::kKept;
  std::vector<PatchVerdict> verdicts;
  std::string error;
};

/// Classifies a crop at every non-ignored pedestrian box; any background
/// verdict discards, a classifier failure quarantines.
Stage2Result stage2_gate(const PatchClassifier& classifier, const ImageSample& translated);

enum class FinalStatus { kKept, kRejected, kQuarantined };

struct CurationRecord {
  std::string image_id;
  double stage1_score = 0.0;
  bool stage1_pass = false;
  std::vector<PatchVerdict> stage2_verdicts;
  FinalStatus final_status = FinalStatus::kRejected;
  std::string reason;

  friend bool operator==(const CurationRecord&, const CurationRecord&) = default;
};

struct CurationReport {
  std::vector<CurationRecord> records;  // pool order

  /// Every stage-1 pass reaches stage 2.
  int stage2_evaluations() const;
};

struct CurationResult {
  std::vector<ImageSample> kept;
  CurationReport report;
};

/// Stage 1 then stage 2 over the pool; survivors keep pool order. Each pool
/// sample's source is found by source_image_id in `sources`.
CurationResult curate(const std::vector<ImageSample>& pool, const std::vector<ImageSample>& sources,
                      const SemanticEncoder& encoder, const PatchClassifier& classifier,
                      double threshold);

/// Manifest form: loads pixels lazily and returns the survivors' entries.
DatasetManifest curate_manifest(const DatasetManifest& pool, const DatasetManifest& sources,
                                const SemanticEncoder& encoder, const PatchClassifier& classifier,
                                double threshold, CurationReport* report);

std::string to_string(FinalStatus status);
std::string serialize_curation_report(const CurationReport& report);
CurationReport parse_curation_report(std::string_view text);

}  // namespace nightaug
