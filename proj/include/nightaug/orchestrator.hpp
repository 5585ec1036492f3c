// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// End-to-end plumbing: component construction from a config, the training
// driver, pool translation, real/synthetic mixing, the injection-ratio grid
// and run-directory verification.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "nightaug/aux_losses.hpp"
#include "nightaug/config.hpp"
#include "nightaug/core_model.hpp"
#include "nightaug/curation.hpp"
#include "nightaug/evaluation.hpp"
#include "nightaug/generator.hpp"
#include "nightaug/lora.hpp"
#include "nightaug/semantic_encoder.hpp"

namespace nightaug {

// ---- artifact hashing ------------------------------------------------------

/// Line-delimited artifacts carry their config hash in "<file>.meta.json".
std::filesystem::path meta_path(const std::filesystem::path& artifact);
void write_meta(const std::filesystem::path& artifact, const std::string& kind,
                const std::string& config_hash,
                const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
nlohmann::ordered_json read_meta(const std::filesystem::path& artifact);

/// Writes through a temporary file and a rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Digest of parameter values, for freeze audits.
std::uint64_t parameter_digest(const std::vector<ad::Var>& params);

std::vector<ImageSample> load_samples(const DatasetManifest& manifest);

// ---- components ------------------------------------------------------------

std::shared_ptr<GeneratorBackbone> make_backbone(const std::string& id);
std::shared_ptr<const SemanticEncoder> make_encoder(const RunConfig& config);
std::vector<int> resolve_layers(const RunConfig& config, const SemanticEncoder& encoder);
std::vector<std::string> resolve_targets(const RunConfig& config, const GeneratorBackbone& backbone);
NoiseSchedule make_schedule(const RunConfig& config);

/// Toy detector trained on annotated samples with the config's step count
/// and learning rate, seeded from the config. The guidance variant also sees
/// random brightness gains; the baseline variant sees the images as given.
ToyDetector train_guidance_detector(const RunConfig& config, const std::vector<ImageSample>& samples);
ToyDetector train_baseline_detector(const RunConfig& config, const std::vector<ImageSample>& samples);
void save_detector(const std::filesystem::path& path, const ToyDetector& detector,
                   const std::string& config_hash);
ToyDetector load_detector(const std::filesystem::path& path);

/// Crop classifier for curation, trained on annotated samples.
ToyPatchClassifier train_curation_classifier(const RunConfig& config,
                                             const std::vector<ImageSample>& samples);
void save_classifier(const std::filesystem::path& path, const ToyPatchClassifier& classifier,
                     const std::string& config_hash);
ToyPatchClassifier load_classifier(const std::filesystem::path& path);

struct TrainingComponents {
  std::shared_ptr<GeneratorBackbone> backbone;
  std::shared_ptr<const SemanticEncoder> encoder;
  std::shared_ptr<DetectorHead> detector;  // frozen
  std::shared_ptr<Discriminator> discriminator;
};

/// Toy components named by the config. The guidance detector is loaded from
/// paths.detector when set, otherwise trained on `day`.
TrainingComponents make_toy_components(const RunConfig& config, const std::vector<ImageSample>& day);

// ---- training --------------------------------------------------------------

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log;
  std::vector<LossReport> reports;
  std::uint64_t encoder_digest_before = 0, encoder_digest_after = 0;
  std::uint64_t detector_digest_before = 0, detector_digest_after = 0;
  std::uint64_t backbone_digest_before = 0, backbone_digest_after = 0;
};

/// Per step: draw a day and a night image, translate the day image, update
/// the discriminator on (night, detached translation), then update adapters,
/// skip mixing and projection heads on the total loss. Writes train_log.jsonl
/// (deterministic), train_timing.jsonl (wall time) and checkpoints under
/// `out_dir`.
TrainResult train(const RunConfig& config, const DatasetManifest& day, const DatasetManifest& night,
                  const TrainingComponents& components, const std::filesystem::path& out_dir);

struct CheckpointHeader {
  std::string config_hash;
  std::uint64_t seed = 0;
  long step = 0;
  std::string backbone;
  std::string encoder;
};

/// A trained generator ready to translate.
struct Generator {
  RunConfig config;
  CheckpointHeader header;
  std::shared_ptr<GeneratorBackbone> backbone;
  AdapterSet adapters;
  NoiseSchedule schedule;
  Tensor condition;

  /// Translation noise is seeded from the config seed and the image id.
  Tensor translate(const Tensor& image, const std::string& image_id) const;
};

Generator load_generator(const std::filesystem::path& checkpoint);
Generator initial_generator(const RunConfig& config);

// ---- pool translation ------------------------------------------------------

struct TranslateOptions {
  int workers = 1;
  // Stop after this many new translations (simulates an interruption).
  std::optional<int> limit;
};

/// Translates every day entry once into <out_dir>/images and writes
/// <out_dir>/synthetic.jsonl. Images already present are reused, so an
/// interrupted run can be resumed.
DatasetManifest translate_pool(const Generator& generator, const DatasetManifest& day,
                               const std::filesystem::path& out_dir,
                               const TranslateOptions& options = {});

// ---- mixing ----------------------------------------------------------------

struct MixSpec {
  DatasetManifest synthetic;
  DatasetManifest real;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

/// floor(ratio * synthetic_count), robust to ratios like 0.29 that are not
/// exact in binary.
std::size_t injection_count(std::size_t synthetic_count, double ratio);

/// Synthetic entries followed by a seeded sample without replacement of
/// injection_count real entries. Image paths are made absolute.
DatasetManifest build_mixed_set(const MixSpec& spec);

// ---- evaluation ------------------------------------------------------------

std::vector<EvalImage> eval_images(const DatasetManifest& manifest);
std::vector<Detection> run_detector(const ToyDetector& detector, const DatasetManifest& manifest);

/// LAMR for each standard subset that has ground truth.
std::vector<EvalCurve> evaluate_detections(const std::vector<Detection>& detections,
                                           const DatasetManifest& ground_truth,
                                           const LamrOptions& options = {});

/// Mean-pooled final-layer encoder features, one row per image.
std::vector<std::vector<double>> image_features(const SemanticEncoder& encoder,
                                                const DatasetManifest& manifest);

// ---- experiment grid -------------------------------------------------------

struct GridRow {
  double ratio = 0.0;
  std::size_t train_size = 0;
  std::size_t real_count = 0;
  std::vector<SubsetResult> lamr;

  double lamr_of(const std::string& subset) const;
};

struct GridReport {
  std::string config_hash;
  std::vector<SubsetResult> baseline;  // the day-trained detector
  std::vector<GridRow> rows;           // ascending ratio
};

/// For each ratio: mix, fine-tune a copy of `base` on the mix, evaluate on
/// `test`. Ratios must be distinct and >= 0.
GridReport run_experiment_grid(const RunConfig& config, const std::vector<double>& ratios,
                               const DatasetManifest& synthetic, const DatasetManifest& real_night,
                               const DatasetManifest& test, const ToyDetector& base);

nlohmann::ordered_json grid_to_json(const GridReport& report);
GridReport grid_from_json(const nlohmann::ordered_json& j);

// ---- run directories -------------------------------------------------------

/// Writes run_config.json (config plus hash) into `dir`.
void write_run_config(const std::filesystem::path& dir, const RunConfig& config);

struct VerifyResult {
  bool ok = false;
  std::string config_hash;
  std::size_t artifacts = 0;
  std::vector<std::string> problems;
};

/// Every JSON artifact's "config_hash" and every line-delimited artifact's
/// sidecar hash must agree, with run_config.json's hash as the reference
/// when that file exists.
VerifyResult verify_run(const std::filesystem::path& dir);

}  // namespace nightaug
