// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/lora.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nightaug/error.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {

using ojson = nlohmann::ordered_json;

void LoraAdapter::validate() const {
  require(a.valid() && b.valid(), ErrorCode::kInvalidArgument, "adapter factors missing");
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.value().dim(1) == rank &&
              b.value().dim(0) == rank,
          ErrorCode::kShapeMismatch, "adapter " + target_name + " factor shapes disagree with rank");
  require(a.value().all_finite() && b.value().all_finite(), ErrorCode::kNonFinite,
          "adapter " + target_name + " has non-finite factors");
}

LoraAdapter init_adapter(const std::string& target_name, int d, int k, int r, std::uint64_t seed,
                         const LoraOptions& options) {
  require(d > 0 && k > 0, ErrorCode::kInvalidArgument, "adapter dimensions must be positive");
  const int limit = std::min(d, k);
  require(r >= 1 && r <= limit, ErrorCode::kOutOfRange,
          "LoRA rank " + std::to_string(r) + " outside [1, " + std::to_string(limit) + "] for " +
              target_name);
  require(r <= options.max_rank_fraction * limit, ErrorCode::kOutOfRange,
          "LoRA rank " + std::to_string(r) + " is not low-rank for " + target_name + " (" +
              std::to_string(d) + "x" + std::to_string(k) + ")");
  require(static_cast<long>(r) * (d + k) < static_cast<long>(d) * k, ErrorCode::kOutOfRange,
          "LoRA rank " + std::to_string(r) + " gives no parameter saving for " + target_name);

  Rng rng = Rng(seed).derive(target_name);
  Tensor a({d, r});
  const double stddev = 1.0 / std::sqrt(static_cast<double>(r));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal(0.0, stddev);
  LoraAdapter adapter;
  adapter.target_name = target_name;
  adapter.a = ad::parameter(std::move(a));
  adapter.b = ad::parameter(Tensor({r, k}));
  adapter.rank = r;
  adapter.scale = options.scale;
  return adapter;
}

Tensor delta(const LoraAdapter& adapter) {
  adapter.validate();
  const Tensor& A = adapter.a.value();
  const Tensor& B = adapter.b.value();
  const int d = A.dim(0), r = A.dim(1), k = B.dim(1);
  Tensor out({d, k});
  for (int i = 0; i < d; ++i)
    for (int p = 0; p < r; ++p) {
      const double aip = A.at(i, p) * adapter.scale;
      for (int j = 0; j < k; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  return out;
}

Tensor merge(const Tensor& base, const LoraAdapter& adapter) {
  Tensor d = delta(adapter);
  require(base.same_shape(d), ErrorCode::kShapeMismatch,
          "merge: base " + base.shape_string() + " vs adapter " + d.shape_string());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += base[i];
  return d;
}

ad::Var adapted_forward(const Tensor& base, const LoraAdapter& adapter, const ad::Var& x) {
  adapter.validate();
  require(base.rank() == 2 && base.dim(0) == adapter.rows() && base.dim(1) == adapter.cols(),
          ErrorCode::kShapeMismatch,
          "adapter " + adapter.target_name + " does not fit base weight " + base.shape_string());
  return linear(base, &adapter, x);
}

ad::Var linear(const Tensor& base, const LoraAdapter* adapter, const ad::Var& x) {
  require(base.rank() == 2, ErrorCode::kShapeMismatch, "linear: base weight must be a matrix");
  const int k = base.dim(1);
  const bool vector_input = x.value().rank() == 1;
  require((vector_input && x.value().dim(0) == k) ||
              (x.value().rank() == 2 && x.value().dim(1) == k),
          ErrorCode::kShapeMismatch,
          "linear: input " + x.value().shape_string() + " incompatible with weight " +
              base.shape_string());
  const ad::Var rows = vector_input ? ad::reshape(x, {1, k}) : x;
  ad::Var y = ad::matmul_nt(rows, ad::constant(base));
  if (adapter) {
    const ad::Var bx = ad::matmul_nt(rows, adapter->b);
    ad::Var low = ad::matmul_nt(bx, adapter->a);
    if (adapter->scale != 1.0) low = ad::scale(low, adapter->scale);
    y = ad::add(y, low);
  }
  return vector_input ? ad::reshape(y, {base.dim(0)}) : y;
}

void AdapterSet::add(LoraAdapter adapter) {
  adapter.validate();
  const std::string name = adapter.target_name;
  require(adapters_.find(name) == adapters_.end(), ErrorCode::kInvalidArgument,
          "duplicate adapter for " + name);
  adapters_.emplace(name, std::move(adapter));
}

const LoraAdapter* AdapterSet::find(const std::string& target_name) const {
  auto it = adapters_.find(target_name);
  return it == adapters_.end() ? nullptr : &it->second;
}

std::vector<ad::Var> AdapterSet::parameters() const {
  std::vector<ad::Var> out;
  for (const auto& [name, a] : adapters_) {
    out.push_back(a.a);
    out.push_back(a.b);
  }
  return out;
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, a] : adapters_) n += a.parameter_count();
  return n;
}

ojson tensor_to_json(const Tensor& t) {
  ojson j;
  j["shape"] = t.dims();
  j["data"] = t.values();
  return j;
}

Tensor tensor_from_json(const ojson& j) {
  return Tensor(j.at("shape").get<std::vector<int>>(), j.at("data").get<std::vector<double>>());
}

ojson adapters_to_json(const AdapterSet& adapters) {
  ojson out = ojson::object();
  for (const auto& [name, a] : adapters.adapters()) {
    ojson e;
    e["r"] = a.rank;
    e["scale"] = a.scale;
    e["A"] = tensor_to_json(a.a.value());
    e["B"] = tensor_to_json(a.b.value());
    out[name] = std::move(e);
  }
  return out;
}

AdapterSet adapters_from_json(const ojson& j) {
  AdapterSet set;
  for (const auto& [name, e] : j.items()) {
    LoraAdapter a;
    a.target_name = name;
    a.rank = e.at("r").get<int>();
    a.scale = e.at("scale").get<double>();
    a.a = ad::parameter(tensor_from_json(e.at("A")));
    a.b = ad::parameter(tensor_from_json(e.at("B")));
    set.add(std::move(a));
  }
  return set;
}

void save_adapter_checkpoint(const std::filesystem::path& path, const AdapterSet& adapters,
                             const AdapterCheckpointHeader& header) {
  ojson doc;
  doc["header"] = {{"format", "nightaug-lora-v1"},
                   {"seed", header.seed},
                   {"config_hash", header.config_hash}};
  doc["adapters"] = adapters_to_json(adapters);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump() << '\n';
  require(out.good(), ErrorCode::kIo, "short write to " + path.string());
}

AdapterSet load_adapter_checkpoint(const std::filesystem::path& path,
                                   AdapterCheckpointHeader* header) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  try {
    const ojson doc = ojson::parse(in);
    const auto& head = doc.at("header");
    require(head.at("format") == "nightaug-lora-v1", ErrorCode::kParse,
            path.string() + ": not a LoRA checkpoint");
    if (header) {
      header->seed = head.at("seed").get<std::uint64_t>();
      header->config_hash = head.at("config_hash").get<std::string>();
    }
    return adapters_from_json(doc.at("adapters"));
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kParse, path.string() + ": " + ex.what());
  }
}

}  // namespace nightaug
