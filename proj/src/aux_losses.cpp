// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/aux_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nightaug/error.hpp"
#include "nightaug/lora.hpp"
#include "nightaug/optim.hpp"

namespace nightaug {

namespace {

ad::Var col(const ad::Var& boxes, int c) { return ad::slice_cols(boxes, c, c + 1); }

void require_valid_rows(const Tensor& boxes, const char* what) {
  require(boxes.rank() == 2 && boxes.dim(1) == 4, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected {n, 4} boxes, got " + boxes.shape_string());
  for (int r = 0; r < boxes.dim(0); ++r) {
    const double x0 = boxes.at(r, 0), y0 = boxes.at(r, 1), x1 = boxes.at(r, 2), y1 = boxes.at(r, 3);
    require(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1) &&
                x0 < x1 && y0 < y1,
            ErrorCode::kInvalidGeometry, std::string(what) + ": degenerate box");
  }
}

}  // namespace

ad::Var ciou_rows(const ad::Var& pred, const ad::Var& target) {
  require_valid_rows(pred.value(), "ciou_loss");
  require_valid_rows(target.value(), "ciou_loss");
  require(pred.value().same_shape(target.value()), ErrorCode::kShapeMismatch,
          "ciou_loss: box counts differ");
  const ad::Var zero = ad::constant_scalar(0.0);
  const ad::Var ax0 = col(pred, 0), ay0 = col(pred, 1), ax1 = col(pred, 2), ay1 = col(pred, 3);
  const ad::Var bx0 = col(target, 0), by0 = col(target, 1), bx1 = col(target, 2),
                by1 = col(target, 3);
  const ad::Var aw = ad::sub(ax1, ax0), ah = ad::sub(ay1, ay0);
  const ad::Var bw = ad::sub(bx1, bx0), bh = ad::sub(by1, by0);
  const ad::Var iw = ad::maximum(ad::sub(ad::minimum(ax1, bx1), ad::maximum(ax0, bx0)), zero);
  const ad::Var ih = ad::maximum(ad::sub(ad::minimum(ay1, by1), ad::maximum(ay0, by0)), zero);
  const ad::Var inter = ad::mul(iw, ih);
  const ad::Var uni = ad::sub(ad::add(ad::mul(aw, ah), ad::mul(bw, bh)), inter);
  const ad::Var iou_v = ad::div(inter, uni);
  const ad::Var cw = ad::sub(ad::maximum(ax1, bx1), ad::minimum(ax0, bx0));
  const ad::Var ch = ad::sub(ad::maximum(ay1, by1), ad::minimum(ay0, by0));
  const ad::Var c2 = ad::add(ad::square(cw), ad::square(ch));
  const ad::Var dx = ad::scale(ad::sub(ad::add(ax0, ax1), ad::add(bx0, bx1)), 0.5);
  const ad::Var dy = ad::scale(ad::sub(ad::add(ay0, ay1), ad::add(by0, by1)), 0.5);
  const ad::Var rho2 = ad::add(ad::square(dx), ad::square(dy));
  const ad::Var v = ad::scale(ad::square(ad::sub(ad::atan(ad::div(bw, bh)), ad::atan(ad::div(aw, ah)))),
                              4.0 / (std::numbers::pi * std::numbers::pi));
  const ad::Var one_minus_iou = ad::add_scalar(ad::neg(iou_v), 1.0);
  // alpha = v / ((1 - IoU) + v); the floor only matters when v = 0, where
  // alpha must be 0.
  const ad::Var denom = ad::maximum(ad::add(one_minus_iou, v), ad::constant_scalar(1e-300));
  const ad::Var alpha = ad::div(v, denom);
  const ad::Var loss =
      ad::add(ad::add(one_minus_iou, ad::div(rho2, c2)), ad::mul(alpha, v));
  return ad::reshape(loss, {pred.value().dim(0)});
}

ad::Var ciou_loss(const ad::Var& pred, const ad::Var& target) {
  require(pred.value().size() == 4 && target.value().size() == 4, ErrorCode::kShapeMismatch,
          "ciou_loss: expected 4-element boxes");
  return ad::reshape(ciou_rows(ad::reshape(pred, {1, 4}), ad::reshape(target, {1, 4})), {1});
}

double ciou_loss(const BoundingBox& pred, const BoundingBox& target) {
  pred.validate();
  target.validate();
  return ciou_loss(ad::constant(Tensor::vector({pred.x0, pred.y0, pred.x1, pred.y1})),
                   ad::constant(Tensor::vector({target.x0, target.y0, target.x1, target.y1})))
      .item();
}

ad::Var dfl_rows(const ad::Var& bin_logits, const std::vector<double>& targets) {
  require(bin_logits.value().rank() == 2 && bin_logits.value().dim(1) >= 2,
          ErrorCode::kShapeMismatch, "dfl_loss: expected {n, K + 1} logits");
  const int n = bin_logits.value().dim(0), bins = bin_logits.value().dim(1);
  const int k = bins - 1;
  require(static_cast<int>(targets.size()) == n, ErrorCode::kShapeMismatch,
          "dfl_loss: one target per row required");
  Tensor coeff({n, bins});
  for (int r = 0; r < n; ++r) {
    const double y = targets[static_cast<std::size_t>(r)];
    require(std::isfinite(y) && y >= 0.0 && y <= k, ErrorCode::kOutOfRange,
            "dfl_loss: target " + std::to_string(y) + " outside [0, " + std::to_string(k) + "]");
    const int i = std::min(static_cast<int>(std::floor(y)), k - 1);
    coeff.at(r, i) = (i + 1) - y;
    coeff.at(r, i + 1) = y - i;
  }
  return ad::neg(ad::sum_cols(ad::mul(ad::row_log_softmax(bin_logits), ad::constant(std::move(coeff)))));
}

ad::Var dfl_loss(const ad::Var& bin_logits, double target) {
  require(bin_logits.value().rank() == 1, ErrorCode::kShapeMismatch,
          "dfl_loss: expected a {K + 1} logit vector");
  const int bins = bin_logits.value().dim(0);
  return ad::reshape(dfl_rows(ad::reshape(bin_logits, {1, bins}), {target}), {1});
}

ad::Var bce_with_logits(const ad::Var& logits, const Tensor& targets) {
  require(logits.value().size() == targets.size(), ErrorCode::kShapeMismatch,
          "bce_with_logits: target count mismatch");
  const ad::Var t = ad::constant(targets.reshaped(logits.value().dims()));
  Tensor ones(logits.value().dims(), 1.0);
  const ad::Var not_t = ad::sub(ad::constant(std::move(ones)), t);
  const ad::Var ll = ad::add(ad::mul(t, ad::log_sigmoid(logits)),
                             ad::mul(not_t, ad::log_sigmoid(ad::neg(logits))));
  return ad::neg(ad::mean(ll));
}

ad::Var detector_consistency_loss(const DetectorHead& detector, const ad::Var& image,
                                  const AnnotationSet& targets, const DetectorWeights& weights,
                                  DetectorLosses* parts) {
  require(detector.frozen(), ErrorCode::kContractViolation,
          "detector must be frozen while guiding the generator");
  const DenseDetections dense = detector.dense_forward(image);
  DetectorLosses l = detector.component_losses(dense, targets);
  if (parts) *parts = l;
  return ad::add(ad::add(ad::scale(l.box, weights.box), ad::scale(l.cls, weights.cls)),
                 ad::scale(l.dfl, weights.dfl));
}

namespace {

constexpr int kHeadChannels = 2 + 4 * (ToyDetector::kBins + 1);

ad::Var init_weight(Rng& rng, int rows, int cols) {
  Tensor t({rows, cols});
  const double sd = std::sqrt(2.0 / cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
  return ad::parameter(std::move(t));
}

}  // namespace

ToyDetector::ToyDetector(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("toy-detector");
  params_ = {init_weight(rng, 16, 27),  ad::parameter(Tensor({16})),
             init_weight(rng, 16, 144), ad::parameter(Tensor({16})),
             init_weight(rng, 32, 144), ad::parameter(Tensor({32})),
             init_weight(rng, 32, 288), ad::parameter(Tensor({32})),
             init_weight(rng, kHeadChannels, 32)};
  Tensor hb({kHeadChannels});
  hb[0] = -4.0;  // rare objects at init
  params_.push_back(ad::parameter(std::move(hb)));
  // Scale the head down so the initial bin distributions are near uniform.
  for (double& v : params_[8].mutable_value().values()) v *= 0.1;
}

DenseDetections ToyDetector::dense_forward(const ad::Var& image) const {
  const Tensor& x = image.value();
  require(x.rank() == 3 && x.dim(2) == 3 && x.dim(0) % kStride == 0 && x.dim(1) % kStride == 0,
          ErrorCode::kShapeMismatch,
          "toy detector expects an {H, W, 3} image with sides divisible by 8, got " +
              x.shape_string());
  ad::Var h = ad::silu(ad::conv2d(image, use(0), use(1), 3, 2, 1));
  h = ad::silu(ad::conv2d(h, use(2), use(3), 3, 2, 1));
  h = ad::silu(ad::conv2d(h, use(4), use(5), 3, 2, 1));
  h = ad::silu(ad::conv2d(h, use(6), use(7), 3, 1, 1));
  const int gh = h.value().dim(0), gw = h.value().dim(1);
  const ad::Var rows = ad::reshape(h, {gh * gw, 32});
  const ad::Var out = ad::add_row(ad::matmul_nt(rows, use(8)), use(9));
  DenseDetections d;
  d.objectness = ad::reshape(ad::slice_cols(out, 0, 1), {gh * gw});
  d.class_logit = ad::reshape(ad::slice_cols(out, 1, 2), {gh * gw});
  d.bins = ad::slice_cols(out, 2, kHeadChannels);
  d.grid_height = gh;
  d.grid_width = gw;
  d.stride = kStride;
  d.bins_k = kBins;
  return d;
}

namespace {

struct Assignment {
  std::vector<int> cells;
  std::vector<BoundingBox> boxes;
};

Assignment assign_positives(const DenseDetections& d, const AnnotationSet& targets) {
  const int cells = d.grid_height * d.grid_width;
  std::vector<const BoundingBox*> owner(static_cast<std::size_t>(cells), nullptr);
  std::vector<const BoundingBox*> boxes;
  for (const ObjectAnnotation& o : targets)
    if (!o.ignore && o.label == kPedestrianLabel) boxes.push_back(&o.box);
  // Cells centred strictly inside a box; the smallest box claims shared cells.
  std::vector<bool> covered(boxes.size(), false);
  for (int c = 0; c < cells; ++c) {
    const double cx = (c % d.grid_width + 0.5) * d.stride;
    const double cy = (c / d.grid_width + 0.5) * d.stride;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const BoundingBox& b = *boxes[i];
      if (!(cx > b.x0 && cx < b.x1 && cy > b.y0 && cy < b.y1)) continue;
      auto& slot = owner[static_cast<std::size_t>(c)];
      if (!slot || b.area() < slot->area()) slot = &b;
    }
  }
  for (int c = 0; c < cells; ++c)
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (owner[static_cast<std::size_t>(c)] == boxes[i]) covered[i] = true;
  // Boxes too thin to contain a cell centre fall back to their centre cell.
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (covered[i]) continue;
    const int cx = std::clamp(static_cast<int>(std::floor(boxes[i]->center_x() / d.stride)), 0,
                              d.grid_width - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(boxes[i]->center_y() / d.stride)), 0,
                              d.grid_height - 1);
    auto& slot = owner[static_cast<std::size_t>(cy * d.grid_width + cx)];
    if (!slot) slot = boxes[i];
  }
  Assignment a;
  for (int c = 0; c < cells; ++c)
    if (owner[static_cast<std::size_t>(c)]) {
      a.cells.push_back(c);
      a.boxes.push_back(*owner[static_cast<std::size_t>(c)]);
    }
  return a;
}

// Expected distance per side, in pixels, for the given rows of bin logits.
ad::Var expected_distances(const ad::Var& bins, int k, int stride) {
  const int n = bins.value().dim(0);
  const ad::Var flat = ad::reshape(bins, {n * 4, k + 1});
  Tensor values({k + 1, 1});
  for (int i = 0; i <= k; ++i) values.at(i, 0) = static_cast<double>(i * stride);
  return ad::reshape(ad::matmul(ad::row_softmax(flat), ad::constant(std::move(values))), {n, 4});
}

}  // namespace

DetectorLosses ToyDetector::component_losses(const DenseDetections& dense,
                                             const AnnotationSet& targets) const {
  const int cells = dense.grid_height * dense.grid_width;
  const Assignment pos = assign_positives(dense, targets);
  Tensor obj_t({cells});
  for (int c : pos.cells) obj_t[static_cast<std::size_t>(c)] = 1.0;
  DetectorLosses l;
  l.positives = static_cast<int>(pos.cells.size());
  l.cls = bce_with_logits(dense.objectness, obj_t);
  if (pos.cells.empty()) {
    l.box = ad::constant_scalar(0.0);
    l.dfl = ad::constant_scalar(0.0);
    return l;
  }
  const int n = l.positives;
  const ad::Var cls_pos = ad::gather_rows(ad::reshape(dense.class_logit, {cells, 1}), pos.cells);
  l.cls = ad::add(l.cls, bce_with_logits(cls_pos, Tensor({n, 1}, 1.0)));

  const ad::Var bins = ad::gather_rows(dense.bins, pos.cells);
  const int k = dense.bins_k;
  const double s = dense.stride;
  Tensor centers({n, 4}), signs({n, 4}), target_rows({n, 4});
  std::vector<double> dfl_targets;
  for (int i = 0; i < n; ++i) {
    const int cell = pos.cells[static_cast<std::size_t>(i)];
    const double cx = (cell % dense.grid_width + 0.5) * s;
    const double cy = (cell / dense.grid_width + 0.5) * s;
    const BoundingBox& b = pos.boxes[static_cast<std::size_t>(i)];
    const double c[4] = {cx, cy, cx, cy};
    const double sg[4] = {-1.0, -1.0, 1.0, 1.0};
    const double dist[4] = {cx - b.x0, cy - b.y0, b.x1 - cx, b.y1 - cy};
    const double tb[4] = {b.x0, b.y0, b.x1, b.y1};
    for (int j = 0; j < 4; ++j) {
      centers.at(i, j) = c[j];
      signs.at(i, j) = sg[j];
      target_rows.at(i, j) = tb[j];
      dfl_targets.push_back(std::clamp(dist[j] / s, 0.0, static_cast<double>(k)));
    }
  }
  const ad::Var dists = expected_distances(bins, k, dense.stride);
  const ad::Var boxes =
      ad::add(ad::constant(std::move(centers)), ad::mul(dists, ad::constant(std::move(signs))));
  l.box = ad::mean(ciou_rows(boxes, ad::constant(std::move(target_rows))));
  l.dfl = ad::mean(dfl_rows(ad::reshape(bins, {n * 4, k + 1}), dfl_targets));
  return l;
}

std::uint64_t ToyDetector::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ad::Var& p : params_)
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p.value().data()),
                                 p.value().size() * sizeof(double)),
                h);
  return h;
}

std::vector<Detection> ToyDetector::detect(const Tensor& image, const std::string& image_id,
                                           double min_score, double nms_iou,
                                           int max_detections) const {
  const DenseDetections d = dense_forward(ad::constant(image));
  const int cells = d.grid_height * d.grid_width;
  const ad::Var dists = expected_distances(d.bins, d.bins_k, d.stride);
  const double W = image.dim(1), H = image.dim(0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<Detection> cand;
  for (int c = 0; c < cells; ++c) {
    const double score = sig(d.objectness.value()[static_cast<std::size_t>(c)]) *
                         sig(d.class_logit.value()[static_cast<std::size_t>(c)]);
    if (score < min_score) continue;
    const double cx = (c % d.grid_width + 0.5) * d.stride, cy = (c / d.grid_width + 0.5) * d.stride;
    const double x0 = std::clamp(cx - dists.value().at(c, 0), 0.0, W);
    const double y0 = std::clamp(cy - dists.value().at(c, 1), 0.0, H);
    const double x1 = std::clamp(cx + dists.value().at(c, 2), 0.0, W);
    const double y1 = std::clamp(cy + dists.value().at(c, 3), 0.0, H);
    if (!(x1 - x0 > 1e-6 && y1 - y0 > 1e-6)) continue;
    cand.push_back({image_id, BoundingBox{x0, y0, x1, y1}, score});
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& det : cand) {
    bool suppressed = false;
    for (const Detection& k : kept)
      if (iou(k.box, det.box) > nms_iou) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(det);
    if (static_cast<int>(kept.size()) >= max_detections) break;
  }
  return kept;
}

nlohmann::ordered_json ToyDetector::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "nightaug-toy-detector-v1";
  j["params"] = nlohmann::ordered_json::array();
  for (const ad::Var& p : params_) j["params"].push_back(tensor_to_json(p.value()));
  return j;
}

ToyDetector ToyDetector::from_json(const nlohmann::ordered_json& j) {
  ToyDetector d;
  const auto& ps = j.at("params");
  require(ps.size() == d.params_.size(), ErrorCode::kParse, "toy detector: wrong parameter count");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor t = tensor_from_json(ps[i]);
    require(t.same_shape(d.params_[i].value()), ErrorCode::kParse,
            "toy detector: parameter shape mismatch");
    d.params_[i].mutable_value() = std::move(t);
  }
  return d;
}

void train_toy_detector(ToyDetector& detector, const std::vector<ImageSample>& samples,
                        const DetectorTrainOptions& options, Rng& rng) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "detector training needs samples");
  require(options.min_gain > 0 && options.max_gain >= options.min_gain, ErrorCode::kInvalidArgument,
          "detector gain range must satisfy 0 < min <= max");
  require(options.batch >= 1 && options.steps >= 0, ErrorCode::kInvalidArgument,
          "detector training needs batch >= 1 and steps >= 0");
  const bool was_frozen = detector.frozen();
  detector.set_frozen(false);
  AdamOptions ao;
  ao.learning_rate = options.learning_rate;
  ao.weight_decay = 0.0;
  Adam opt(detector.parameters(), ao);
  for (int step = 0; step < options.steps; ++step) {
    opt.set_learning_rate(options.learning_rate * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * step / options.steps)));
    std::vector<ad::Var> terms;
    for (int b = 0; b < options.batch; ++b) {
      const ImageSample& s = samples[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(samples.size()) - 1))];
      Tensor pixels = s.pixels;
      if (options.min_gain != 1.0 || options.max_gain != 1.0) {
        const double gain = rng.uniform(options.min_gain, options.max_gain);
        for (double& v : pixels.values()) v = std::min(1.0, v * gain);
      }
      const DenseDetections d = detector.dense_forward(ad::constant(std::move(pixels)));
      const DetectorLosses l = detector.component_losses(d, s.annotations);
      terms.push_back(ad::add(
          ad::add(ad::scale(l.box, options.weights.box), ad::scale(l.cls, options.weights.cls)),
          ad::scale(l.dfl, options.weights.dfl)));
    }
    ad::Var loss = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) loss = ad::add(loss, terms[i]);
    loss = ad::scale(loss, 1.0 / options.batch);
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }
  detector.set_frozen(was_frozen);
}

ad::Var identity_loss(const ad::Var& generated, const ad::Var& target) {
  require(generated.value().same_shape(target.value()), ErrorCode::kShapeMismatch,
          "identity_loss: generated " + generated.value().shape_string() + " vs input " +
              target.value().shape_string());
  return ad::mean(ad::abs(ad::sub(generated, target)));
}

ad::Var identity_loss(const std::function<ad::Var(const ad::Var&)>& generator,
                      const ad::Var& target) {
  return identity_loss(generator(target), target);
}

double Discriminator::probability(const Tensor& image) const {
  const double l = logit(ad::constant(image)).item();
  return 1.0 / (1.0 + std::exp(-l));
}

ToyDiscriminator::ToyDiscriminator(std::uint64_t seed,
                                   std::shared_ptr<const SemanticEncoder> perceptual)
    : perceptual_(std::move(perceptual)) {
  Rng rng = Rng(seed).derive("toy-discriminator");
  const int extra = perceptual_ ? perceptual_->channels(0) : 0;
  params_ = {init_weight(rng, 8, 27),  ad::parameter(Tensor({8})),
             init_weight(rng, 16, 72), ad::parameter(Tensor({16})),
             init_weight(rng, 1, 16 + extra), ad::parameter(Tensor({1}))};
  for (double& v : params_[4].mutable_value().values()) v *= 0.1;
}

ad::Var ToyDiscriminator::logit(const ad::Var& image) const {
  ad::Var h = ad::silu(ad::conv2d(image, params_[0], params_[1], 3, 2, 1));
  h = ad::silu(ad::conv2d(h, params_[2], params_[3], 3, 2, 1));
  const auto& d = h.value().dims();
  ad::Var pooled = ad::reshape(ad::mean_rows(ad::reshape(h, {d[0] * d[1], d[2]})), {1, d[2]});
  if (perceptual_) {
    const PatchFeatureStack s = extract_stack(*perceptual_, image, {0});
    const ad::Var f = ad::reshape(ad::mean_rows(s.features[0]), {1, s.channels(0)});
    pooled = ad::concat_cols({pooled, f});
  }
  return ad::reshape(ad::add(ad::matmul_nt(pooled, params_[4]), ad::reshape(params_[5], {1, 1})),
                     {1});
}

namespace {

void require_probabilities(const ad::Var& p, const char* what) {
  for (double v : p.value().values())
    require(std::isfinite(v) && v > 0.0 && v < 1.0, ErrorCode::kContractViolation,
            std::string(what) + ": discriminator output " + std::to_string(v) +
                " outside (0, 1)");
}

ad::Var logits_of(const Discriminator& d, const std::vector<ad::Var>& images, bool detached) {
  require(!images.empty(), ErrorCode::kInvalidArgument, "adversarial loss on an empty batch");
  std::vector<ad::Var> ls;
  for (const ad::Var& x : images) ls.push_back(d.logit(detached ? ad::detach(x) : x));
  return ad::stack(ls);
}

}  // namespace

ad::Var discriminator_loss_from_probabilities(const ad::Var& p_real, const ad::Var& p_fake) {
  require_probabilities(p_real, "discriminator_loss");
  require_probabilities(p_fake, "discriminator_loss");
  Tensor ones(p_fake.value().dims(), 1.0);
  return ad::neg(ad::add(ad::mean(ad::log(p_real)),
                         ad::mean(ad::log(ad::sub(ad::constant(std::move(ones)), p_fake)))));
}

ad::Var generator_adversarial_loss_from_probabilities(const ad::Var& p_fake, bool nonsaturating) {
  require_probabilities(p_fake, "generator_adversarial_loss");
  if (nonsaturating) return ad::neg(ad::mean(ad::log(p_fake)));
  Tensor ones(p_fake.value().dims(), 1.0);
  return ad::mean(ad::log(ad::sub(ad::constant(std::move(ones)), p_fake)));
}

ad::Var discriminator_loss(const Discriminator& d, const std::vector<ad::Var>& real,
                           const std::vector<ad::Var>& fake) {
  const ad::Var lr = logits_of(d, real, false);
  const ad::Var lf = logits_of(d, fake, true);
  return ad::neg(ad::add(ad::mean(ad::log_sigmoid(lr)), ad::mean(ad::log_sigmoid(ad::neg(lf)))));
}

ad::Var generator_adversarial_loss(const Discriminator& d, const std::vector<ad::Var>& fake,
                                   bool nonsaturating) {
  const ad::Var lf = logits_of(d, fake, false);
  if (nonsaturating) return ad::neg(ad::mean(ad::log_sigmoid(lf)));
  return ad::mean(ad::log_sigmoid(ad::neg(lf)));
}

void LossWeights::validate() const {
  for (double w : {src, hdce, det, idt, adv})
    require(std::isfinite(w) && w >= 0.0, ErrorCode::kInvalidArgument,
            "loss weights must be finite and >= 0");
}

nlohmann::ordered_json LossReport::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  nlohmann::ordered_json raw = nlohmann::ordered_json::object();
  nlohmann::ordered_json w = nlohmann::ordered_json::object();
  for (const Entry& e : entries) {
    raw[e.name] = e.raw;
    w[e.name] = e.weight;
  }
  j["components"] = std::move(raw);
  j["weights"] = std::move(w);
  j["total"] = total;
  return j;
}

ad::Var total_loss(const LossComponents& components, const LossWeights& weights,
                   const RampSchedule& ramp, long step, LossReport* report) {
  weights.validate();
  const double r = ramp.weight(step);
  const std::pair<const char*, std::pair<const ad::Var*, double>> terms[] = {
      {"src", {&components.src, weights.src * r}},
      {"hdce", {&components.hdce, weights.hdce * r}},
      {"det", {&components.det, weights.det}},
      {"idt", {&components.idt, weights.idt}},
      {"adv", {&components.adv, weights.adv}},
  };
  ad::Var total = ad::constant_scalar(0.0);
  LossReport rep;
  rep.step = step;
  for (const auto& [name, tw] : terms) {
    const ad::Var* v = tw.first;
    const double raw = v->valid() ? v->item() : 0.0;
    rep.entries.push_back({name, raw, tw.second});
    if (v->valid()) total = ad::add(total, ad::scale(*v, tw.second));
  }
  rep.total = total.item();
  if (report) *report = std::move(rep);
  return total;
}

}  // namespace nightaug
