// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Run configuration. Every key has a schema entry carrying its default and
// where that default comes from; loading overlays a JSON document onto the
// defaults and rejects keys the schema does not know.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace nightaug {

enum class Provenance { kPaper, kDecision };

struct SchemaEntry {
  std::string key;  // dotted path, e.g. "training.learning_rate"
  nlohmann::ordered_json default_value;
  Provenance provenance = Provenance::kDecision;
  std::string description;
};

struct RunConfig {
  std::uint64_t seed = 1234;

  struct Training {
    double learning_rate = 1e-5;
    double weight_decay = 1e-2;
    long steps = 25000;
    int batch_size = 1;
    long ramp_steps = 12000;
    long checkpoint_every = 1000;
    double discriminator_learning_rate = 1e-5;
    int discriminator_steps = 1;  // per generator step
    bool nonsaturating_adversarial = false;
  } training;

  struct Contrastive {
    double tau = 0.07;
    double gamma = 0.5;
    int num_patches = 128;
    int projection_dim = 256;
    std::vector<int> layers;  // empty: the encoder's default layer rule
  } contrastive;

  struct Loss {
    double src = 1.0, hdce = 1.0, det = 0.5, idt = 0.1, adv = 0.01;
    double det_box = 7.5, det_cls = 0.5, det_dfl = 1.5;
  } loss;

  struct Lora {
    int rank = 8;
    double scale = 1.0;
    std::vector<std::string> targets;  // empty: the backbone's defaults
  } lora;

  struct Noise {
    double alpha = 0.7;
    int timestep = 999;
  } noise;

  std::string prompt = "a street scene at night";

  struct Components {
    std::string backbone = "toy-identity";
    std::string encoder = "toy-patch-statistics";
    int encoder_input_size = 64;
    std::string detector = "toy";
    std::string discriminator = "toy";
  } components;

  struct Curation {
    double threshold = 0.95;
  } curation;

  struct Evaluation {
    double iou_threshold = 0.5;
    int fppi_points = 9;
    int sliced_projections = 128;
  } evaluation;

  struct Toy {
    int image_size = 64;
    int day_train = 48;
    int night_train = 48;
    int night_test = 32;
    int detector_steps = 1000;
    int finetune_steps = 600;
    double detector_learning_rate = 3e-3;
    // Brightness gain range for the guidance detector's training images.
    double guidance_min_gain = 0.15;
    double guidance_max_gain = 1.1;
  } toy;

  struct Paths {
    std::string day_manifest;
    std::string night_manifest;
    std::string detector;
  } paths;

  void validate() const;
};

const std::vector<SchemaEntry>& config_schema();
std::string to_string(Provenance provenance);

/// Nested JSON with every key, in schema order.
nlohmann::ordered_json config_to_json(const RunConfig& config);
/// Overlays `j` on the defaults. Unknown keys and type mismatches throw.
RunConfig config_from_json(const nlohmann::ordered_json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical compact serialisation; the hash is taken over these bytes.
std::string canonical_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

}  // namespace nightaug
