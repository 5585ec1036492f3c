// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Low-rank adaptation of frozen linear weights: W = W0 + scale * A B with
// A {d, r} and B {r, k}. Base weights never receive gradients; only A and B
// are trainable leaves.

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "nightaug/autodiff.hpp"

namespace nightaug {

struct LoraAdapter {
  std::string target_name;
  ad::Var a;  // {d, r}
  ad::Var b;  // {r, k}
  int rank = 0;
  double scale = 1.0;

  int rows() const { return a.value().dim(0); }
  int cols() const { return b.value().dim(1); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(rank) * static_cast<std::size_t>(rows() + cols());
  }
  void validate() const;
};

struct LoraOptions {
  double scale = 1.0;
  // Largest admissible rank as a fraction of min(d, k).
  double max_rank_fraction = 0.5;
};

/// A ~ N(0, 1/sqrt(r)) from the seed, B = 0, so the initial update is zero.
/// Rejects r outside [1, min(d,k)], r above max_rank_fraction * min(d,k), and
/// ranks whose factor count r(d+k) is not below d*k.
LoraAdapter init_adapter(const std::string& target_name, int d, int k, int r,
                         std::uint64_t seed, const LoraOptions& options = {});

/// scale * A B as a dense {d, k} matrix.
Tensor delta(const LoraAdapter& adapter);

/// W0 + delta(adapter).
Tensor merge(const Tensor& base, const LoraAdapter& adapter);

/// (W0 + scale A B) x computed as W0 x + scale A (B x). x is {k} or a batch
/// {n, k} of row vectors; the result is {d} or {n, d}.
ad::Var adapted_forward(const Tensor& base, const LoraAdapter& adapter, const ad::Var& x);

/// Same as adapted_forward when `adapter` is null.
ad::Var linear(const Tensor& base, const LoraAdapter* adapter, const ad::Var& x);

class AdapterSet {
 public:
  void add(LoraAdapter adapter);
  const LoraAdapter* find(const std::string& target_name) const;
  const std::map<std::string, LoraAdapter>& adapters() const { return adapters_; }
  std::vector<ad::Var> parameters() const;
  std::size_t parameter_count() const;
  bool empty() const { return adapters_.empty(); }

 private:
  std::map<std::string, LoraAdapter> adapters_;
};

nlohmann::ordered_json adapters_to_json(const AdapterSet& adapters);
AdapterSet adapters_from_json(const nlohmann::ordered_json& j);

struct AdapterCheckpointHeader {
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Flat archive target_name -> {A, B, r, scale} under a header with the
/// creation seed and config hash.
void save_adapter_checkpoint(const std::filesystem::path& path, const AdapterSet& adapters,
                             const AdapterCheckpointHeader& header);
AdapterSet load_adapter_checkpoint(const std::filesystem::path& path,
                                   AdapterCheckpointHeader* header = nullptr);

nlohmann::ordered_json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::ordered_json& j);

}  // namespace nightaug
