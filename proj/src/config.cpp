// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <type_traits>

#include "nightaug/aux_losses.hpp"
#include "nightaug/error.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {
namespace {

using json = nlohmann::ordered_json;

struct Binding {
  SchemaEntry entry;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

bool type_matches(const json& expected, const json& actual) {
  if (expected.is_boolean()) return actual.is_boolean();
  if (expected.is_number_integer()) return actual.is_number_integer();
  if (expected.is_number()) return actual.is_number();
  if (expected.is_string()) return actual.is_string();
  if (expected.is_array()) return actual.is_array();
  return false;
}

template <class Ref>
Binding bind(std::string key, Provenance provenance, std::string description, Ref ref) {
  Binding b;
  b.entry.key = std::move(key);
  b.entry.provenance = provenance;
  b.entry.description = std::move(description);
  b.get = [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); };
  b.set = [ref](RunConfig& c, const json& j) {
    using T = std::decay_t<decltype(ref(c))>;
    ref(c) = j.get<T>();
  };
  b.entry.default_value = b.get(RunConfig{});
  return b;
}

#define NA_FIELD(path) [](RunConfig& c) -> auto& { return c.path; }

const std::vector<Binding>& bindings() {
  constexpr auto P = Provenance::kPaper;
  constexpr auto D = Provenance::kDecision;
  static const std::vector<Binding> table = {
      bind("seed", D, "root seed; every stream derives from it", NA_FIELD(seed)),
      bind("training.learning_rate", P, "generator Adam learning rate", NA_FIELD(training.learning_rate)),
      bind("training.weight_decay", P, "decoupled weight decay", NA_FIELD(training.weight_decay)),
      bind("training.steps", P, "optimisation steps", NA_FIELD(training.steps)),
      bind("training.batch_size", P, "images per step and domain", NA_FIELD(training.batch_size)),
      bind("training.ramp_steps", P, "linear ramp length of the SRC and hDCE weights",
           NA_FIELD(training.ramp_steps)),
      bind("training.checkpoint_every", D, "checkpoint cadence in steps",
           NA_FIELD(training.checkpoint_every)),
      bind("training.discriminator_learning_rate", D, "discriminator Adam learning rate",
           NA_FIELD(training.discriminator_learning_rate)),
      bind("training.discriminator_steps", D, "discriminator updates per generator update",
           NA_FIELD(training.discriminator_steps)),
      bind("training.nonsaturating_adversarial", D, "use -log D(fake) for the generator",
           NA_FIELD(training.nonsaturating_adversarial)),
      bind("contrastive.tau", D, "hDCE temperature", NA_FIELD(contrastive.tau)),
      bind("contrastive.gamma", P, "hard-negative weighting temperature", NA_FIELD(contrastive.gamma)),
      bind("contrastive.num_patches", P, "sampled patches per layer", NA_FIELD(contrastive.num_patches)),
      bind("contrastive.projection_dim", D, "projection head output size",
           NA_FIELD(contrastive.projection_dim)),
      bind("contrastive.layers", D, "encoder layers; empty selects the default rule",
           NA_FIELD(contrastive.layers)),
      bind("loss.src", P, "SRC weight", NA_FIELD(loss.src)),
      bind("loss.hdce", P, "hDCE weight", NA_FIELD(loss.hdce)),
      bind("loss.det", P, "detector consistency weight", NA_FIELD(loss.det)),
      bind("loss.idt", P, "identity weight", NA_FIELD(loss.idt)),
      bind("loss.adv", P, "adversarial weight", NA_FIELD(loss.adv)),
      bind("loss.det_box", D, "box term inside the detector loss", NA_FIELD(loss.det_box)),
      bind("loss.det_cls", D, "class term inside the detector loss", NA_FIELD(loss.det_cls)),
      bind("loss.det_dfl", D, "DFL term inside the detector loss", NA_FIELD(loss.det_dfl)),
      bind("lora.rank", D, "adapter rank", NA_FIELD(lora.rank)),
      bind("lora.scale", D, "adapter output scale", NA_FIELD(lora.scale)),
      bind("lora.targets", D, "attachment points; empty selects the backbone defaults",
           NA_FIELD(lora.targets)),
      bind("noise.alpha", D, "signal coefficient of the injected noise", NA_FIELD(noise.alpha)),
      bind("noise.timestep", P, "single denoising timestep", NA_FIELD(noise.timestep)),
      bind("prompt", D, "target-domain prompt", NA_FIELD(prompt)),
      bind("components.backbone", D, "generator backbone id", NA_FIELD(components.backbone)),
      bind("components.encoder", D, "semantic encoder id", NA_FIELD(components.encoder)),
      bind("components.encoder_input_size", D, "encoder input side",
           NA_FIELD(components.encoder_input_size)),
      bind("components.detector", D, "guidance detector id", NA_FIELD(components.detector)),
      bind("components.discriminator", D, "discriminator id", NA_FIELD(components.discriminator)),
      bind("curation.threshold", P, "stage-1 fidelity threshold", NA_FIELD(curation.threshold)),
      bind("evaluation.iou_threshold", P, "matching IoU", NA_FIELD(evaluation.iou_threshold)),
      bind("evaluation.fppi_points", P, "reference FPPI points", NA_FIELD(evaluation.fppi_points)),
      bind("evaluation.sliced_projections", D, "projections for sliced WD",
           NA_FIELD(evaluation.sliced_projections)),
      bind("toy.image_size", D, "procedural scene side", NA_FIELD(toy.image_size)),
      bind("toy.day_train", D, "procedural day scenes", NA_FIELD(toy.day_train)),
      bind("toy.night_train", D, "procedural night scenes for training", NA_FIELD(toy.night_train)),
      bind("toy.night_test", D, "procedural night scenes for evaluation", NA_FIELD(toy.night_test)),
      bind("toy.detector_steps", D, "toy detector training steps", NA_FIELD(toy.detector_steps)),
      bind("toy.finetune_steps", D, "toy detector fine-tuning steps per grid row",
           NA_FIELD(toy.finetune_steps)),
      bind("toy.detector_learning_rate", D, "toy detector learning rate",
           NA_FIELD(toy.detector_learning_rate)),
      bind("toy.guidance_min_gain", D, "lowest brightness gain seen by the guidance detector",
           NA_FIELD(toy.guidance_min_gain)),
      bind("toy.guidance_max_gain", D, "highest brightness gain seen by the guidance detector",
           NA_FIELD(toy.guidance_max_gain)),
      bind("paths.day_manifest", D, "day manifest", NA_FIELD(paths.day_manifest)),
      bind("paths.night_manifest", D, "night manifest", NA_FIELD(paths.night_manifest)),
      bind("paths.detector", D, "pretrained guidance detector", NA_FIELD(paths.detector)),
  };
  return table;
}

#undef NA_FIELD

void set_path(json& root, const std::string& dotted, json value) {
  json* node = &root;
  std::size_t start = 0;
  for (std::size_t dot; (dot = dotted.find('.', start)) != std::string::npos; start = dot + 1)
    node = &(*node)[dotted.substr(start, dot - start)];
  (*node)[dotted.substr(start)] = std::move(value);
}

void flatten(const json& j, const std::string& prefix, const std::set<std::string>& leaves,
             std::vector<std::pair<std::string, json>>& out) {
  require(j.is_object(), ErrorCode::kInvalidArgument,
          "config section '" + prefix + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (leaves.count(key)) {
      out.emplace_back(key, v);
    } else if (v.is_object()) {
      flatten(v, key, leaves, out);
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
  }
}

json to_json_filtered(const RunConfig& config, bool include_paths) {
  json root = json::object();
  for (const Binding& b : bindings()) {
    if (!include_paths && b.entry.key.rfind("paths.", 0) == 0) continue;
    set_path(root, b.entry.key, b.get(config));
  }
  return root;
}

}  // namespace

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kInvalidArgument, "config: " + what);
  };
  check(training.learning_rate > 0, "training.learning_rate must be > 0");
  check(training.weight_decay >= 0, "training.weight_decay must be >= 0");
  check(training.steps >= 0, "training.steps must be >= 0");
  check(training.batch_size == 1, "training.batch_size must be 1");
  check(training.ramp_steps >= 0, "training.ramp_steps must be >= 0");
  check(training.checkpoint_every > 0, "training.checkpoint_every must be > 0");
  check(training.discriminator_learning_rate > 0, "training.discriminator_learning_rate must be > 0");
  check(training.discriminator_steps >= 1, "training.discriminator_steps must be >= 1");
  check(contrastive.tau > 0, "contrastive.tau must be > 0");
  check(contrastive.gamma > 0, "contrastive.gamma must be > 0");
  check(contrastive.num_patches >= 2, "contrastive.num_patches must be >= 2");
  check(contrastive.projection_dim >= 1, "contrastive.projection_dim must be >= 1");
  LossWeights{loss.src, loss.hdce, loss.det, loss.idt, loss.adv}.validate();
  check(loss.det_box >= 0 && loss.det_cls >= 0 && loss.det_dfl >= 0,
        "detector loss weights must be >= 0");
  check(lora.rank >= 1, "lora.rank must be >= 1");
  check(noise.alpha > 0 && noise.alpha <= 1, "noise.alpha must be in (0, 1]");
  check(noise.timestep >= 0, "noise.timestep must be >= 0");
  check(components.encoder_input_size > 0, "components.encoder_input_size must be > 0");
  check(curation.threshold >= -1 && curation.threshold <= 1, "curation.threshold must be in [-1, 1]");
  check(evaluation.iou_threshold > 0 && evaluation.iou_threshold <= 1,
        "evaluation.iou_threshold must be in (0, 1]");
  check(evaluation.fppi_points >= 2, "evaluation.fppi_points must be >= 2");
  check(evaluation.sliced_projections >= 1, "evaluation.sliced_projections must be >= 1");
  check(toy.image_size >= 16 && toy.image_size % 8 == 0, "toy.image_size must be a multiple of 8");
  check(toy.day_train >= 1 && toy.night_train >= 1 && toy.night_test >= 1,
        "toy scene counts must be >= 1");
  check(toy.detector_steps >= 0 && toy.finetune_steps >= 0, "toy step counts must be >= 0");
  check(toy.detector_learning_rate > 0, "toy.detector_learning_rate must be > 0");
  check(toy.guidance_min_gain > 0 && toy.guidance_max_gain >= toy.guidance_min_gain,
        "toy guidance gains must satisfy 0 < min <= max");
}

const std::vector<SchemaEntry>& config_schema() {
  static const std::vector<SchemaEntry> schema = [] {
    std::vector<SchemaEntry> out;
    for (const Binding& b : bindings()) out.push_back(b.entry);
    return out;
  }();
  return schema;
}

std::string to_string(Provenance provenance) {
  return provenance == Provenance::kPaper ? "paper" : "decision";
}

nlohmann::ordered_json config_to_json(const RunConfig& config) {
  return to_json_filtered(config, true);
}

RunConfig config_from_json(const nlohmann::ordered_json& j) {
  std::set<std::string> leaves;
  for (const Binding& b : bindings()) leaves.insert(b.entry.key);
  std::vector<std::pair<std::string, json>> flat;
  flatten(j, "", leaves, flat);

  RunConfig config;
  for (const auto& [key, value] : flat) {
    for (const Binding& b : bindings()) {
      if (b.entry.key != key) continue;
      require(type_matches(b.entry.default_value, value), ErrorCode::kInvalidArgument,
              "config key '" + key + "' has the wrong type");
      try {
        b.set(config, value);
      } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::kInvalidArgument, "config key '" + key + "' has the wrong element type");
      }
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string canonical_config(const RunConfig& config) {
  return to_json_filtered(config, false).dump();
}

std::string config_hash(const RunConfig& config) {
  return hex64(fnv1a64(canonical_config(config)));
}

}  // namespace nightaug
