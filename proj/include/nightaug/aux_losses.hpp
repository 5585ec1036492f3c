// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Detector-guided consistency, identity and adversarial terms, and the
// weighted total objective with its per-step report.

#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "nightaug/autodiff.hpp"
#include "nightaug/contrastive.hpp"
#include "nightaug/core_model.hpp"
#include "nightaug/rng.hpp"
#include "nightaug/semantic_encoder.hpp"

namespace nightaug {

/// Boxes as {n, 4} rows (x0, y0, x1, y1); returns the {n} per-row losses
/// 1 - IoU + rho^2 / c^2 + alpha v with alpha = v / ((1 - IoU) + v), alpha = 0
/// when v = 0. Gradients flow through alpha.
ad::Var ciou_rows(const ad::Var& pred, const ad::Var& target);
ad::Var ciou_loss(const ad::Var& pred, const ad::Var& target);
double ciou_loss(const BoundingBox& pred, const BoundingBox& target);

/// Rows of K + 1 bin logits against continuous targets in [0, K]; returns
/// the {n} per-row losses.
ad::Var dfl_rows(const ad::Var& bin_logits, const std::vector<double>& targets);
ad::Var dfl_loss(const ad::Var& bin_logits, double target);

/// Mean over elements of binary cross entropy with logits.
ad::Var bce_with_logits(const ad::Var& logits, const Tensor& targets);

struct DetectorWeights {
  double box = 7.5;
  double cls = 0.5;
  double dfl = 1.5;
};

/// Pre-NMS dense outputs on a grid of cells of `stride` pixels.
struct DenseDetections {
  ad::Var objectness;  // {cells}
  ad::Var class_logit; // {cells}
  ad::Var bins;        // {cells, 4 * (K + 1)} ordered left, top, right, bottom
  int grid_height = 0;
  int grid_width = 0;
  int stride = 0;
  int bins_k = 0;
};

struct DetectorLosses {
  ad::Var box, cls, dfl;
  int positives = 0;
};

class DetectorHead {
 public:
  virtual ~DetectorHead() = default;
  virtual DenseDetections dense_forward(const ad::Var& image) const = 0;
  virtual DetectorLosses component_losses(const DenseDetections& dense,
                                          const AnnotationSet& targets) const = 0;
  virtual bool frozen() const = 0;
  virtual std::vector<ad::Var> parameters() const = 0;
};

/// Composes weighted box, class and DFL terms on the translated image.
/// Requires a frozen detector.
ad::Var detector_consistency_loss(const DetectorHead& detector, const ad::Var& image,
                                  const AnnotationSet& targets, const DetectorWeights& weights,
                                  DetectorLosses* parts = nullptr);

/// Single-scale anchor-free detector: three stride-2 3x3 convolutions to a
/// stride-8 grid, one stride-1 3x3 convolution for context, then a 1x1 head
/// with objectness, class logit and K + 1 = 9 distance bins per box side
/// (distances in stride units from the cell centre). Positives: every cell
/// centred strictly inside a non-ignored pedestrian box, the smallest box
/// winning shared cells; a box containing no cell centre takes the cell
/// holding its own centre if that cell is still free.
class ToyDetector final : public DetectorHead {
 public:
  static constexpr int kStride = 8;
  static constexpr int kBins = 8;

  explicit ToyDetector(std::uint64_t seed = 3);

  DenseDetections dense_forward(const ad::Var& image) const override;
  DetectorLosses component_losses(const DenseDetections& dense,
                                  const AnnotationSet& targets) const override;
  bool frozen() const override { return frozen_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }
  std::vector<ad::Var> parameters() const override { return params_; }
  std::uint64_t digest() const;

  /// Post-processed boxes: score = sigmoid(obj) * sigmoid(cls), boxes
  /// clipped to the image, greedy NMS.
  std::vector<Detection> detect(const Tensor& image, const std::string& image_id,
                                double min_score = 0.01, double nms_iou = 0.5,
                                int max_detections = 20) const;

  nlohmann::ordered_json to_json() const;
  static ToyDetector from_json(const nlohmann::ordered_json& j);

 private:
  ad::Var use(std::size_t i) const { return frozen_ ? ad::detach(params_[i]) : params_[i]; }

  std::vector<ad::Var> params_;
  bool frozen_ = false;
};

struct DetectorTrainOptions {
  int steps = 1500;
  int batch = 4;  // samples averaged per step
  double learning_rate = 3e-3;
  DetectorWeights weights;
  // Each step's image is scaled by a gain drawn from [min_gain, max_gain].
  double min_gain = 1.0;
  double max_gain = 1.0;
};

/// Supervised training on annotated samples drawn with replacement,
/// with a cosine learning-rate decay to zero.
void train_toy_detector(ToyDetector& detector, const std::vector<ImageSample>& samples,
                        const DetectorTrainOptions& options, Rng& rng);

/// Mean absolute difference over all pixels.
ad::Var identity_loss(const ad::Var& generated, const ad::Var& target);
ad::Var identity_loss(const std::function<ad::Var(const ad::Var&)>& generator,
                      const ad::Var& target);

/// Scores images as real target-domain images. logit() returns the pre-link
/// scalar; the probability is sigmoid(logit).
class Discriminator {
 public:
  virtual ~Discriminator() = default;
  virtual ad::Var logit(const ad::Var& image) const = 0;
  virtual std::vector<ad::Var> parameters() const = 0;
  double probability(const Tensor& image) const;
};

/// Two strided convolutions, global average pooling, optionally joined by
/// the pooled first-block features of a frozen patch encoder, then a linear
/// readout.
class ToyDiscriminator final : public Discriminator {
 public:
  explicit ToyDiscriminator(std::uint64_t seed = 5,
                            std::shared_ptr<const SemanticEncoder> perceptual = nullptr);
  ad::Var logit(const ad::Var& image) const override;
  std::vector<ad::Var> parameters() const override { return params_; }

 private:
  std::vector<ad::Var> params_;
  std::shared_ptr<const SemanticEncoder> perceptual_;
};

/// Negated discriminator objective, for a minimiser:
/// -(mean log D(real) + mean log(1 - D(fake))). Probabilities must lie
/// strictly inside (0, 1).
ad::Var discriminator_loss_from_probabilities(const ad::Var& p_real, const ad::Var& p_fake);
/// mean log(1 - D(fake)), or -mean log D(fake) when nonsaturating.
ad::Var generator_adversarial_loss_from_probabilities(const ad::Var& p_fake,
                                                      bool nonsaturating = false);

/// Logit forms of the two objectives; fakes are detached for the
/// discriminator update.
ad::Var discriminator_loss(const Discriminator& d, const std::vector<ad::Var>& real,
                           const std::vector<ad::Var>& fake);
ad::Var generator_adversarial_loss(const Discriminator& d, const std::vector<ad::Var>& fake,
                                   bool nonsaturating = false);

struct LossWeights {
  double src = 1.0;
  double hdce = 1.0;
  double det = 0.5;
  double idt = 0.1;
  double adv = 0.01;

  void validate() const;
};

struct LossComponents {
  ad::Var src, hdce, det, idt, adv;
};

struct LossReport {
  struct Entry {
    std::string name;
    double raw = 0.0;
    double weight = 0.0;  // effective weight at this step
  };
  long step = 0;
  std::vector<Entry> entries;
  double total = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Weighted sum with the ramp applied to the SRC and hDCE weights. Missing
/// (invalid) components count as zero.
ad::Var total_loss(const LossComponents& components, const LossWeights& weights,
                   const RampSchedule& ramp, long step, LossReport* report = nullptr);

}  // namespace nightaug
