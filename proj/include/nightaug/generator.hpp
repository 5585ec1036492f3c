// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// One-step latent translation: encode, inject noise, denoise once, decode
// with encoder skip features. Backbones are pluggable; ToyBackbone is a
// small deterministic stand-in with exactly invertible identity settings.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nightaug/autodiff.hpp"
#include "nightaug/lora.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {

/// Variance-preserving point of a diffusion schedule at a fixed timestep.
struct NoiseSchedule {
  double alpha = 0.7;
  double sigma = 0.71414284285428499;  // sqrt(1 - 0.49)
  int timestep = 999;

  static NoiseSchedule variance_preserving(double alpha, int timestep);
  /// Checks alpha, sigma >= 0 and alpha^2 + sigma^2 = 1.
  void validate() const;
};

/// alpha * z + sigma * epsilon.
ad::Var inject_noise(const ad::Var& z, const NoiseSchedule& schedule, const ad::Var& epsilon);

struct EncodedLatent {
  ad::Var latent;              // {H/f, W/f, C_latent}
  std::vector<ad::Var> skips;  // encoder features routed to the decoder
};

/// Contract a real latent diffusion binding implements. Images are
/// {H, W, 3} in [0, 1]. Weights named by named_weights() are the only ones
/// LoRA may attach to; their shapes are {d, k} linear maps.
class GeneratorBackbone {
 public:
  virtual ~GeneratorBackbone() = default;

  virtual std::string id() const = 0;
  virtual int downsample_factor() const = 0;
  virtual int latent_channels() const = 0;

  virtual EncodedLatent encode(const ad::Var& image, const AdapterSet* adapters) const = 0;
  virtual ad::Var denoise(const ad::Var& noisy_latent, const NoiseSchedule& schedule,
                          const Tensor& condition, const std::vector<ad::Var>& skips,
                          const AdapterSet* adapters) const = 0;
  virtual ad::Var decode(const ad::Var& latent, const std::vector<ad::Var>& skips,
                         const AdapterSet* adapters) const = 0;

  virtual std::map<std::string, std::vector<int>> named_weights() const = 0;
  /// Non-LoRA trainable parameters (skip-connection mixing convolutions).
  virtual std::vector<ad::Var> skip_parameters() const = 0;
  /// Digest of every frozen base weight, for freeze audits.
  virtual std::uint64_t frozen_digest() const = 0;

  long denoiser_calls() const { return denoiser_calls_.load(); }

 protected:
  void count_denoiser_call() const { ++denoiser_calls_; }

 private:
  mutable std::atomic<long> denoiser_calls_{0};
};

/// Throws kInvalidArgument naming the required multiple when the image
/// sides are not divisible by the backbone's downsampling factor.
void check_divisible(const GeneratorBackbone& backbone, const Tensor& image);

/// Full pathway encode -> noise -> one denoiser call -> decode, clamped to
/// [0, 1] with ad::clamp_restoring. Noise comes from `rng`. Stage failures
/// become kTranslation errors naming the stage.
ad::Var translate(const GeneratorBackbone& backbone, const AdapterSet* adapters,
                  const NoiseSchedule& schedule, const ad::Var& image, const Tensor& condition,
                  Rng& rng);

/// Deterministic prompt embedding derived from the prompt text.
Tensor prompt_embedding(const std::string& prompt, int dims);

enum class ToyMode { kIdentity, kDarkening };

std::string to_string(ToyMode mode);
ToyMode parse_toy_mode(const std::string& text);

/// Space-to-depth encoder (factor 2) with two pointwise levels, a per-pixel
/// MLP noise predictor, and a decoder that mixes latent and skip features
/// with a trainable 1x1 convolution, applies a globally conditioned
/// per-channel modulation and a residual MLP, then maps back to pixels.
/// Frozen weights start at an exactly invertible setting: with sigma = 0 and
/// no adapters the pathway returns its input (times 0.25 in darkening mode).
class ToyBackbone final : public GeneratorBackbone {
 public:
  static constexpr int kFactor = 2;
  static constexpr int kLatent = 24;
  static constexpr int kHidden = 32;
  static constexpr int kCondition = 8;

  explicit ToyBackbone(ToyMode mode = ToyMode::kIdentity, std::uint64_t seed = 7);

  std::string id() const override;
  int downsample_factor() const override { return kFactor; }
  int latent_channels() const override { return kLatent; }
  ToyMode mode() const { return mode_; }
  double output_gain() const;

  EncodedLatent encode(const ad::Var& image, const AdapterSet* adapters) const override;
  ad::Var denoise(const ad::Var& noisy_latent, const NoiseSchedule& schedule,
                  const Tensor& condition, const std::vector<ad::Var>& skips,
                  const AdapterSet* adapters) const override;
  ad::Var decode(const ad::Var& latent, const std::vector<ad::Var>& skips,
                 const AdapterSet* adapters) const override;

  std::map<std::string, std::vector<int>> named_weights() const override;
  std::vector<ad::Var> skip_parameters() const override { return {mix_}; }
  std::uint64_t frozen_digest() const override;

  const Tensor& base_weight(const std::string& name) const;
  const ad::Var& mix() const { return mix_; }
  void set_mix(const Tensor& value);

  /// LoRA attachment points used when a run does not configure its own.
  static std::vector<std::string> default_targets();

 private:
  ad::Var apply(const std::string& name, const AdapterSet* adapters, const ad::Var& rows) const;

  ToyMode mode_;
  std::uint64_t seed_;
  std::map<std::string, Tensor> weights_;
  Tensor denoiser_bias_, global_bias_, residual_bias_;
  ad::Var mix_;  // {kLatent, 2 * kLatent}
};

/// Attaches freshly initialized adapters to `targets` of the backbone.
AdapterSet attach_adapters(const GeneratorBackbone& backbone,
                           const std::vector<std::string>& targets, int rank,
                           std::uint64_t seed, const LoraOptions& options = {});

}  // namespace nightaug
