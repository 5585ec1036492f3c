// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/generator.hpp"

#include <cmath>
#include <numbers>

#include "nightaug/error.hpp"

namespace nightaug {

NoiseSchedule NoiseSchedule::variance_preserving(double alpha, int timestep) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kOutOfRange,
          "noise schedule alpha must lie in [0, 1]");
  NoiseSchedule s;
  s.alpha = alpha;
  s.sigma = std::sqrt(1.0 - alpha * alpha);
  s.timestep = timestep;
  return s;
}

void NoiseSchedule::validate() const {
  require(std::isfinite(alpha) && std::isfinite(sigma) && alpha >= 0.0 && sigma >= 0.0,
          ErrorCode::kOutOfRange, "noise schedule coefficients must be finite and >= 0");
  require(std::abs(alpha * alpha + sigma * sigma - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
          "noise schedule is not variance preserving: alpha^2 + sigma^2 = " +
              std::to_string(alpha * alpha + sigma * sigma));
  require(timestep >= 0, ErrorCode::kOutOfRange, "noise timestep must be >= 0");
}

ad::Var inject_noise(const ad::Var& z, const NoiseSchedule& schedule, const ad::Var& epsilon) {
  require(z.value().same_shape(epsilon.value()), ErrorCode::kShapeMismatch,
          "inject_noise: latent " + z.value().shape_string() + " vs noise " +
              epsilon.value().shape_string());
  return ad::add(ad::scale(z, schedule.alpha), ad::scale(epsilon, schedule.sigma));
}

void check_divisible(const GeneratorBackbone& backbone, const Tensor& image) {
  require(image.rank() == 3 && image.dim(2) == 3, ErrorCode::kShapeMismatch,
          "generator expects an {H, W, 3} image, got " + image.shape_string());
  const int f = backbone.downsample_factor();
  require(image.dim(0) % f == 0 && image.dim(1) % f == 0, ErrorCode::kInvalidArgument,
          "image " + std::to_string(image.dim(1)) + "x" + std::to_string(image.dim(0)) +
              " must have sides divisible by " + std::to_string(f));
}

namespace {

template <typename F>
auto run_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    fail(ErrorCode::kTranslation, std::string("translate: stage '") + stage + "' failed: " +
                                      error_code_name(e.code()) + ": " + e.what());
  } catch (const std::exception& e) {
    fail(ErrorCode::kTranslation,
         std::string("translate: stage '") + stage + "' failed: " + e.what());
  }
}

}  // namespace

ad::Var translate(const GeneratorBackbone& backbone, const AdapterSet* adapters,
                  const NoiseSchedule& schedule, const ad::Var& image, const Tensor& condition,
                  Rng& rng) {
  check_divisible(backbone, image.value());
  schedule.validate();
  EncodedLatent enc = run_stage("encode", [&] { return backbone.encode(image, adapters); });
  Tensor eps(enc.latent.value().dims());
  if (schedule.sigma != 0.0)
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  const ad::Var noisy = inject_noise(enc.latent, schedule, ad::constant(std::move(eps)));
  const ad::Var denoised = run_stage("denoise", [&] {
    return backbone.denoise(noisy, schedule, condition, enc.skips, adapters);
  });
  ad::Var out = run_stage("decode", [&] { return backbone.decode(denoised, enc.skips, adapters); });
  require(out.value().same_shape(image.value()), ErrorCode::kTranslation,
          "translate: stage 'decode' returned " + out.value().shape_string() + " for input " +
              image.value().shape_string());
  return ad::clamp_restoring(out, 0.0, 1.0);
}

Tensor prompt_embedding(const std::string& prompt, int dims) {
  Rng rng(fnv1a64(prompt));
  Tensor c({dims});
  double norm = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = rng.normal();
    norm += c[i] * c[i];
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] /= norm;
  return c;
}

std::string to_string(ToyMode mode) { return mode == ToyMode::kIdentity ? "identity" : "darkening"; }

ToyMode parse_toy_mode(const std::string& text) {
  if (text == "identity") return ToyMode::kIdentity;
  if (text == "darkening") return ToyMode::kDarkening;
  fail(ErrorCode::kInvalidArgument, "unknown toy backbone mode '" + text + "'");
}

namespace {

Tensor random_matrix(Rng& rng, int rows, int cols, double stddev) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

Tensor embed_identity(int rows, int cols) {
  Tensor t({rows, cols});
  for (int i = 0; i < std::min(rows, cols); ++i) t.at(i, i) = 1.0;
  return t;
}

ad::Var rows_of(const ad::Var& hwc) {
  const auto& d = hwc.value().dims();
  return ad::reshape(hwc, {d[0] * d[1], d[2]});
}

}  // namespace

ToyBackbone::ToyBackbone(ToyMode mode, std::uint64_t seed) : mode_(mode), seed_(seed) {
  Rng rng = Rng(seed).derive("toy-backbone");
  const int in = 3 * kFactor * kFactor;
  weights_["enc.conv0"] = embed_identity(kLatent, in);
  weights_["enc.conv1"] = Tensor::identity(kLatent);
  weights_["denoiser.in"] = random_matrix(rng, kHidden, kLatent, 1.0 / std::sqrt(kLatent));
  weights_["denoiser.cond"] = random_matrix(rng, kHidden, kCondition + 2, 0.3);
  weights_["denoiser.out"] = Tensor({kLatent, kHidden});
  weights_["decoder.conv0"] = Tensor::identity(kLatent);
  weights_["decoder.global"] = random_matrix(rng, kHidden, kLatent, 1.0);
  weights_["decoder.film"] = Tensor({kLatent, kHidden});
  weights_["decoder.res_in"] = random_matrix(rng, kHidden, kLatent, 1.0 / std::sqrt(kLatent));
  weights_["decoder.res_out"] = Tensor({kLatent, kHidden});
  weights_["decoder.conv_out"] = embed_identity(in, kLatent);
  denoiser_bias_ = random_matrix(rng, 1, kHidden, 0.1).reshaped({kHidden});
  global_bias_ = random_matrix(rng, 1, kHidden, 0.1).reshaped({kHidden});
  residual_bias_ = random_matrix(rng, 1, kHidden, 0.1).reshaped({kHidden});
  mix_ = ad::parameter(embed_identity(kLatent, 2 * kLatent));
}

std::string ToyBackbone::id() const {
  return "toy-backbone-v1/" + to_string(mode_) + "/" + std::to_string(seed_);
}

double ToyBackbone::output_gain() const { return mode_ == ToyMode::kDarkening ? 0.25 : 1.0; }

std::vector<std::string> ToyBackbone::default_targets() {
  return {"enc.conv1",     "denoiser.in",  "denoiser.out",   "decoder.conv0",
          "decoder.film", "decoder.res_in", "decoder.res_out"};
}

const Tensor& ToyBackbone::base_weight(const std::string& name) const {
  auto it = weights_.find(name);
  require(it != weights_.end(), ErrorCode::kInvalidArgument, "toy backbone has no weight " + name);
  return it->second;
}

void ToyBackbone::set_mix(const Tensor& value) {
  require(value.same_shape(mix_.value()), ErrorCode::kShapeMismatch,
          "skip mixing weight must be " + mix_.value().shape_string());
  mix_.mutable_value() = value;
}

std::map<std::string, std::vector<int>> ToyBackbone::named_weights() const {
  std::map<std::string, std::vector<int>> out;
  for (const auto& [name, w] : weights_) out[name] = w.dims();
  return out;
}

std::uint64_t ToyBackbone::frozen_digest() const {
  std::uint64_t h = fnv1a64(id());
  auto mix_in = [&h](const Tensor& t) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double)),
                h);
  };
  for (const auto& [name, w] : weights_) {
    h = fnv1a64(name, h);
    mix_in(w);
  }
  mix_in(denoiser_bias_);
  mix_in(global_bias_);
  mix_in(residual_bias_);
  return h;
}

ad::Var ToyBackbone::apply(const std::string& name, const AdapterSet* adapters,
                           const ad::Var& rows) const {
  const LoraAdapter* a = adapters ? adapters->find(name) : nullptr;
  return linear(base_weight(name), a, rows);
}

EncodedLatent ToyBackbone::encode(const ad::Var& image, const AdapterSet* adapters) const {
  const ad::Var packed = ad::space_to_depth(image, kFactor);
  const int h = packed.value().dim(0), w = packed.value().dim(1);
  const ad::Var h1 = apply("enc.conv0", adapters, rows_of(packed));
  const ad::Var z = apply("enc.conv1", adapters, h1);
  return {ad::reshape(z, {h, w, kLatent}), {ad::reshape(h1, {h, w, kLatent})}};
}

ad::Var ToyBackbone::denoise(const ad::Var& noisy_latent, const NoiseSchedule& schedule,
                             const Tensor& condition, const std::vector<ad::Var>& skips,
                             const AdapterSet* adapters) const {
  count_denoiser_call();
  (void)skips;
  require(schedule.alpha > 0.0, ErrorCode::kInvalidArgument,
          "toy denoiser needs alpha > 0 to recover the latent");
  require(condition.size() == static_cast<std::size_t>(kCondition), ErrorCode::kShapeMismatch,
          "toy denoiser expects a condition vector of size " + std::to_string(kCondition));
  const auto dims = noisy_latent.value().dims();
  Tensor cond({kCondition + 2});
  for (int i = 0; i < kCondition; ++i) cond[static_cast<std::size_t>(i)] = condition[static_cast<std::size_t>(i)];
  const double phase = 0.5 * std::numbers::pi * schedule.timestep / 1000.0;
  cond[kCondition] = std::sin(phase);
  cond[kCondition + 1] = std::cos(phase);
  const ad::Var c = linear(base_weight("denoiser.cond"), nullptr, ad::constant(std::move(cond)));
  const ad::Var zt = rows_of(noisy_latent);
  ad::Var pre = apply("denoiser.in", adapters, zt);
  pre = ad::add_row(pre, ad::add(c, ad::constant(denoiser_bias_)));
  const ad::Var eps_hat = apply("denoiser.out", adapters, ad::silu(pre));
  const ad::Var z0 =
      ad::scale(ad::sub(zt, ad::scale(eps_hat, schedule.sigma)), 1.0 / schedule.alpha);
  return ad::reshape(z0, dims);
}

ad::Var ToyBackbone::decode(const ad::Var& latent, const std::vector<ad::Var>& skips,
                            const AdapterSet* adapters) const {
  require(skips.size() == 1 && skips[0].value().same_shape(latent.value()),
          ErrorCode::kShapeMismatch, "toy decoder expects one skip feature shaped like the latent");
  const int h = latent.value().dim(0), w = latent.value().dim(1);
  const ad::Var u = ad::matmul_nt(ad::concat_cols({rows_of(latent), rows_of(skips[0])}), mix_);
  const ad::Var pooled = ad::mean_rows(u);
  const ad::Var g =
      ad::silu(ad::add(apply("decoder.global", adapters, pooled), ad::constant(global_bias_)));
  const ad::Var film = apply("decoder.film", adapters, g);
  ad::Var y = ad::add(apply("decoder.conv0", adapters, u), ad::mul_row(u, film));
  const ad::Var r =
      ad::silu(ad::add_row(apply("decoder.res_in", adapters, u), ad::constant(residual_bias_)));
  y = ad::add(y, apply("decoder.res_out", adapters, r));
  const ad::Var px = apply("decoder.conv_out", adapters, y);
  ad::Var img = ad::depth_to_space(ad::reshape(px, {h, w, 3 * kFactor * kFactor}), kFactor);
  if (output_gain() != 1.0) img = ad::scale(img, output_gain());
  return img;
}

AdapterSet attach_adapters(const GeneratorBackbone& backbone,
                           const std::vector<std::string>& targets, int rank, std::uint64_t seed,
                           const LoraOptions& options) {
  const auto weights = backbone.named_weights();
  AdapterSet set;
  for (const std::string& name : targets) {
    auto it = weights.find(name);
    require(it != weights.end(), ErrorCode::kInvalidArgument,
            "backbone " + backbone.id() + " has no adaptable weight '" + name + "'");
    set.add(init_adapter(name, it->second[0], it->second[1], rank, seed, options));
  }
  return set;
}

}  // namespace nightaug
