// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Frozen semantic encoders, multi-layer patch features, shared patch index
// sampling and the trainable projection heads applied to sampled patches.

#include <cstdint>
#include <string>
#include <vector>

#include "nightaug/autodiff.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {

/// Contract for a frozen patch encoder. forward() returns one {H_l, W_l, C_l}
/// grid per block with special tokens already dropped.
class SemanticEncoder {
 public:
  virtual ~SemanticEncoder() = default;

  virtual std::string id() const = 0;
  virtual int num_layers() const = 0;
  virtual int channels(int layer) const = 0;
  /// Square input side the encoder resizes images to.
  virtual int input_size() const = 0;
  virtual std::vector<ad::Var> forward(const ad::Var& image) const = 0;
  virtual std::uint64_t frozen_digest() const = 0;
};

/// The default layer rule: the last `count` blocks that precede the final
/// one, clipped to what the encoder has.
std::vector<int> default_layers(int num_layers, int count = 5);

struct PatchFeatureStack {
  std::vector<int> layer_ids;
  std::vector<ad::Var> features;  // {N_l, C_l}
  std::vector<int> grid_height;
  std::vector<int> grid_width;

  std::size_t size() const { return layer_ids.size(); }
  int patches(std::size_t l) const { return features[l].value().dim(0); }
  int channels(std::size_t l) const { return features[l].value().dim(1); }
};

/// Resizes to the encoder's input size, runs it and keeps `layers`.
PatchFeatureStack extract_stack(const SemanticEncoder& encoder, const ad::Var& image,
                                const std::vector<int>& layers);

struct PatchIndexSet {
  std::vector<std::vector<int>> indices;  // one list per stack layer
};

/// Per layer, `num_patches` distinct indices drawn uniformly from [0, N_l).
PatchIndexSet sample_indices(const std::vector<int>& patch_counts, int num_patches, Rng& rng);
PatchIndexSet sample_indices(const PatchFeatureStack& stack, int num_patches, Rng& rng);

/// Two-layer MLP C -> hidden -> out_dim with a SiLU between the layers.
struct ProjectionHead {
  ad::Var w1, b1, w2, b2;

  int in_dim() const { return w1.value().dim(1); }
  int out_dim() const { return w2.value().dim(0); }
  std::vector<ad::Var> parameters() const { return {w1, b1, w2, b2}; }
  /// Unit-norm rows of the MLP output for {n, C} inputs.
  ad::Var forward(const ad::Var& rows) const;

  static ProjectionHead create(int in_dim, int hidden, int out_dim, Rng& rng);
};

std::vector<ProjectionHead> make_heads(const PatchFeatureStack& stack, int out_dim, Rng& rng);
std::vector<ProjectionHead> make_heads(const SemanticEncoder& encoder,
                                       const std::vector<int>& layers, int out_dim, Rng& rng);

/// Gathers the indexed patches of each layer and projects them.
std::vector<ad::Var> project(const PatchFeatureStack& stack, const PatchIndexSet& indices,
                             const std::vector<ProjectionHead>& heads);

enum class ToyEncoderMode {
  kPatchStatistics,  // colour / luminance / gradient statistics, then mixing blocks
  kMeanIntensity,    // every channel holds the patch's mean intensity
  kNormalizedStatistics,  // statistics after rescaling every channel to mean 0.5
};

/// Deterministic patchifier with no learned weights. Statistics mode computes
/// eight per-patch statistics (mean r, g, b, luminance mean and variance,
/// mean horizontal and vertical luminance gradient, gradient energy), then
/// stacks fixed random 3x3 mixing blocks with tanh. Normalized mode first
/// rescales each channel to mean 0.5, so a global gain or a colour cast
/// leaves the features almost unchanged.
class ToyPatchEncoder final : public SemanticEncoder {
 public:
  ToyPatchEncoder(ToyEncoderMode mode = ToyEncoderMode::kPatchStatistics, int input_size = 64,
                  int patch_size = 8, int layers = 3, int width = 16, std::uint64_t seed = 11);

  std::string id() const override;
  int num_layers() const override { return layers_; }
  int channels(int layer) const override;
  int input_size() const override { return input_size_; }
  std::vector<ad::Var> forward(const ad::Var& image) const override;
  std::uint64_t frozen_digest() const override;

 private:
  std::vector<ad::Var> statistics(const ad::Var& image) const;

  ToyEncoderMode mode_;
  int input_size_, patch_size_, layers_, width_;
  std::uint64_t seed_;
  std::vector<Tensor> mixing_;  // {width, 9 * C_in} per block after the first
};

}  // namespace nightaug
