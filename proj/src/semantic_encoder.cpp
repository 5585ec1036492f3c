// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/semantic_encoder.hpp"

#include <cmath>

#include "nightaug/error.hpp"

namespace nightaug {

std::vector<int> default_layers(int num_layers, int count) {
  require(num_layers >= 2, ErrorCode::kInvalidArgument,
          "layer rule needs an encoder with at least two blocks");
  const int last = num_layers - 2;
  const int first = std::max(0, last - count + 1);
  std::vector<int> out;
  for (int l = first; l <= last; ++l) out.push_back(l);
  return out;
}

PatchFeatureStack extract_stack(const SemanticEncoder& encoder, const ad::Var& image,
                                const std::vector<int>& layers) {
  require(!layers.empty(), ErrorCode::kInvalidArgument, "extract_stack: empty layer set");
  for (int l : layers)
    require(l >= 0 && l < encoder.num_layers(), ErrorCode::kOutOfRange,
            "layer " + std::to_string(l) + " out of range for encoder " + encoder.id() + " with " +
                std::to_string(encoder.num_layers()) + " blocks");
  require(image.value().rank() == 3, ErrorCode::kShapeMismatch,
          "extract_stack: expected an {H, W, C} image");
  const int s = encoder.input_size();
  ad::Var input = image;
  if (image.value().dim(0) != s || image.value().dim(1) != s)
    input = ad::resize_bilinear(image, s, s);
  const std::vector<ad::Var> grids = encoder.forward(input);
  PatchFeatureStack stack;
  for (int l : layers) {
    const ad::Var& g = grids.at(static_cast<std::size_t>(l));
    const int h = g.value().dim(0), w = g.value().dim(1), c = g.value().dim(2);
    stack.layer_ids.push_back(l);
    stack.features.push_back(ad::reshape(g, {h * w, c}));
    stack.grid_height.push_back(h);
    stack.grid_width.push_back(w);
  }
  return stack;
}

PatchIndexSet sample_indices(const std::vector<int>& patch_counts, int num_patches, Rng& rng) {
  require(num_patches >= 1, ErrorCode::kInvalidArgument, "N_p must be >= 1");
  PatchIndexSet set;
  for (int n : patch_counts) {
    require(num_patches <= n, ErrorCode::kOutOfRange,
            "N_p = " + std::to_string(num_patches) + " exceeds the " + std::to_string(n) +
                " patches of a layer");
    set.indices.push_back(rng.sample_without_replacement(n, num_patches));
  }
  return set;
}

PatchIndexSet sample_indices(const PatchFeatureStack& stack, int num_patches, Rng& rng) {
  std::vector<int> counts;
  for (std::size_t l = 0; l < stack.size(); ++l) counts.push_back(stack.patches(l));
  return sample_indices(counts, num_patches, rng);
}

ad::Var ProjectionHead::forward(const ad::Var& rows) const {
  const ad::Var h = ad::silu(ad::add_row(ad::matmul_nt(rows, w1), b1));
  return ad::l2_normalize_rows(ad::add_row(ad::matmul_nt(h, w2), b2));
}

ProjectionHead ProjectionHead::create(int in_dim, int hidden, int out_dim, Rng& rng) {
  auto init = [&rng](int rows, int cols) {
    Tensor t({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return ad::parameter(std::move(t));
  };
  ProjectionHead head;
  head.w1 = init(hidden, in_dim);
  head.b1 = ad::parameter(Tensor({hidden}));
  head.w2 = init(out_dim, hidden);
  head.b2 = ad::parameter(Tensor({out_dim}));
  return head;
}

std::vector<ProjectionHead> make_heads(const PatchFeatureStack& stack, int out_dim, Rng& rng) {
  std::vector<ProjectionHead> heads;
  for (std::size_t l = 0; l < stack.size(); ++l)
    heads.push_back(ProjectionHead::create(stack.channels(l), stack.channels(l), out_dim, rng));
  return heads;
}

std::vector<ProjectionHead> make_heads(const SemanticEncoder& encoder,
                                       const std::vector<int>& layers, int out_dim, Rng& rng) {
  std::vector<ProjectionHead> heads;
  for (int l : layers) {
    const int c = encoder.channels(l);
    heads.push_back(ProjectionHead::create(c, c, out_dim, rng));
  }
  return heads;
}

std::vector<ad::Var> project(const PatchFeatureStack& stack, const PatchIndexSet& indices,
                             const std::vector<ProjectionHead>& heads) {
  require(indices.indices.size() == stack.size() && heads.size() == stack.size(),
          ErrorCode::kShapeMismatch, "project: stack, indices and heads disagree on layer count");
  std::vector<ad::Var> out;
  for (std::size_t l = 0; l < stack.size(); ++l) {
    require(heads[l].in_dim() == stack.channels(l), ErrorCode::kShapeMismatch,
            "projection head " + std::to_string(l) + " expects " +
                std::to_string(heads[l].in_dim()) + " channels, layer has " +
                std::to_string(stack.channels(l)));
    for (int i : indices.indices[l])
      require(i >= 0 && i < stack.patches(l), ErrorCode::kOutOfRange,
              "patch index " + std::to_string(i) + " out of range");
    out.push_back(heads[l].forward(ad::gather_rows(stack.features[l], indices.indices[l])));
  }
  return out;
}

ToyPatchEncoder::ToyPatchEncoder(ToyEncoderMode mode, int input_size, int patch_size, int layers,
                                 int width, std::uint64_t seed)
    : mode_(mode),
      input_size_(input_size),
      patch_size_(patch_size),
      layers_(layers),
      width_(width),
      seed_(seed) {
  require(input_size > 0 && patch_size > 0 && input_size % patch_size == 0,
          ErrorCode::kInvalidArgument, "toy encoder input size must be a multiple of the patch size");
  require(layers >= 1, ErrorCode::kInvalidArgument, "toy encoder needs at least one block");
  Rng rng = Rng(seed).derive("toy-encoder");
  if (mode_ != ToyEncoderMode::kMeanIntensity) {
    int cin = 8;
    for (int l = 1; l < layers_; ++l) {
      Tensor w({width_, 9 * cin});
      const double sd = 1.5 / std::sqrt(9.0 * cin);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, sd);
      mixing_.push_back(std::move(w));
      cin = width_;
    }
  }
}

std::string ToyPatchEncoder::id() const {
  return std::string("toy-patch-v1/") +
         (mode_ == ToyEncoderMode::kPatchStatistics     ? "stats"
          : mode_ == ToyEncoderMode::kNormalizedStatistics ? "normstats"
                                                           : "mean") +
         "/" +
         std::to_string(input_size_) + "/" + std::to_string(patch_size_) + "/" +
         std::to_string(layers_) + "/" + std::to_string(seed_);
}

int ToyPatchEncoder::channels(int layer) const {
  require(layer >= 0 && layer < layers_, ErrorCode::kOutOfRange, "toy encoder layer out of range");
  if (mode_ == ToyEncoderMode::kMeanIntensity) return 8;
  return layer == 0 ? 8 : width_;
}

std::uint64_t ToyPatchEncoder::frozen_digest() const {
  std::uint64_t h = fnv1a64(id());
  for (const Tensor& w : mixing_)
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(w.data()), w.size() * sizeof(double)),
                h);
  return h;
}

namespace {

// Averages each channel over non-overlapping p x p patches.
ad::Var patch_mean(const ad::Var& x, int p) {
  const int c = x.value().dim(2);
  Tensor w({c, p * p * c});
  for (int ky = 0; ky < p; ++ky)
    for (int kx = 0; kx < p; ++kx)
      for (int ch = 0; ch < c; ++ch) w.at(ch, (ky * p + kx) * c + ch) = 1.0 / (p * p);
  return ad::conv2d(x, ad::constant(std::move(w)), ad::Var(), p, p, 0);
}

}  // namespace

std::vector<ad::Var> ToyPatchEncoder::forward(const ad::Var& image) const {
  require(image.value().rank() == 3 && image.value().dim(0) == input_size_ &&
              image.value().dim(1) == input_size_ && image.value().dim(2) == 3,
          ErrorCode::kShapeMismatch,
          "toy encoder expects {" + std::to_string(input_size_) + ", " +
              std::to_string(input_size_) + ", 3}, got " + image.value().shape_string());
  if (mode_ == ToyEncoderMode::kNormalizedStatistics) {
    // Grey-world: every channel rescaled to mean 0.5.
    const int n = input_size_ * input_size_;
    const ad::Var flat = ad::reshape(image, {n, 3});
    const ad::Var gain = ad::div(ad::constant(Tensor({3}, 0.5)), ad::add_scalar(ad::mean_rows(flat), 1e-3));
    return statistics(ad::reshape(ad::mul_row(flat, gain), {input_size_, input_size_, 3}));
  }
  return statistics(image);
}

std::vector<ad::Var> ToyPatchEncoder::statistics(const ad::Var& image) const {
  const int p = patch_size_;
  const ad::Var lum = ad::pointwise(image, ad::constant(Tensor::matrix(1, 3, {0.299, 0.587, 0.114})));
  std::vector<ad::Var> out;
  if (mode_ == ToyEncoderMode::kMeanIntensity) {
    const ad::Var m = patch_mean(
        ad::pointwise(image, ad::constant(Tensor::matrix(1, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3}))), p);
    Tensor rep({8, 1}, 1.0);
    const ad::Var f = ad::pointwise(m, ad::constant(std::move(rep)));
    for (int l = 0; l < layers_; ++l) out.push_back(f);
    return out;
  }
  // Central-difference luminance gradients, zero padded.
  Tensor grad_k({2, 9});
  grad_k.at(0, 1 * 3 + 2) = 0.5;
  grad_k.at(0, 1 * 3 + 0) = -0.5;
  grad_k.at(1, 2 * 3 + 1) = 0.5;
  grad_k.at(1, 0 * 3 + 1) = -0.5;
  const ad::Var grads = ad::conv2d(lum, ad::constant(std::move(grad_k)), ad::Var(), 3, 1, 1);
  const ad::Var energy = ad::pointwise(ad::square(grads), ad::constant(Tensor::matrix(1, 2, {1.0, 1.0})));
  const ad::Var stats_in = ad::reshape(
      ad::concat_cols({ad::reshape(image, {input_size_ * input_size_, 3}),
                       ad::reshape(lum, {input_size_ * input_size_, 1}),
                       ad::reshape(ad::square(lum), {input_size_ * input_size_, 1}),
                       ad::reshape(grads, {input_size_ * input_size_, 2}),
                       ad::reshape(energy, {input_size_ * input_size_, 1})}),
      {input_size_, input_size_, 8});
  const ad::Var m = patch_mean(stats_in, p);
  const int g = input_size_ / p;
  const ad::Var rows = ad::reshape(m, {g * g, 8});
  // Columns: r, g, b, lum, lum^2, gx, gy, energy; lum^2 becomes a variance.
  const ad::Var mean_lum = ad::slice_cols(rows, 3, 4);
  const ad::Var var_lum = ad::sub(ad::slice_cols(rows, 4, 5), ad::square(mean_lum));
  // Fixed scalings bring every statistic to a comparable range.
  const ad::Var f0 = ad::concat_cols(
      {ad::scale(ad::add_scalar(ad::slice_cols(rows, 0, 4), -0.5), 2.0), ad::scale(var_lum, 20.0),
       ad::scale(ad::slice_cols(rows, 5, 7), 10.0), ad::scale(ad::slice_cols(rows, 7, 8), 50.0)});
  ad::Var layer = ad::reshape(f0, {g, g, 8});
  out.push_back(layer);
  for (const Tensor& w : mixing_) {
    layer = ad::tanh(ad::conv2d(layer, ad::constant(w), ad::Var(), 3, 1, 1));
    out.push_back(layer);
  }
  return out;
}

}  // namespace nightaug
