// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/nightaug.h"

#include <cmath>
#include <exception>
#include <string>
#include <vector>

#include "nightaug/config.hpp"
#include "nightaug/curation.hpp"
#include "nightaug/error.hpp"
#include "nightaug/evaluation.hpp"
#include "nightaug/orchestrator.hpp"
#include "nightaug/toy_scenes.hpp"

struct na_config {
  nightaug::RunConfig config;
  std::string hash;
  std::string json;
};

struct na_manifest {
  nightaug::DatasetManifest manifest;
};

struct na_verify_result {
  nightaug::VerifyResult result;
};

namespace {

namespace fs = std::filesystem;
using nightaug::ErrorCode;

thread_local std::string g_last_error;

na_status to_status(ErrorCode code) { return static_cast<na_status>(static_cast<int>(code)); }

struct NullArgument {
  std::string name;
};

template <class Fn>
na_status guarded(Fn fn) {
  try {
    fn();
    g_last_error.clear();
    return NA_OK;
  } catch (const NullArgument& e) {
    g_last_error = e.name + " is null";
    return NA_ERR_NULL_ARGUMENT;
  } catch (const nightaug::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return NA_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (p == nullptr) throw NullArgument{name};
}

na_status null_argument(const char* name) {
  g_last_error = std::string(name) + " is null";
  return NA_ERR_NULL_ARGUMENT;
}

nightaug::RunConfig config_or_default(const na_config* c) {
  return c ? c->config : nightaug::RunConfig{};
}

na_config* wrap(nightaug::RunConfig config) {
  auto* c = new na_config;
  c->hash = nightaug::config_hash(config);
  c->json = nightaug::config_to_json(config).dump(2);
  c->config = std::move(config);
  return c;
}

void save_manifest_with_meta(const nightaug::DatasetManifest& m, const fs::path& path,
                             const std::string& hash, const nlohmann::ordered_json& extra = {}) {
  nightaug::write_text_atomic(path, nightaug::serialize_manifest(m));
  nightaug::write_meta(path, "manifest", hash,
                       extra.is_null() ? nlohmann::ordered_json::object() : extra);
}

}  // namespace

extern "C" {

const char* na_version(void) { return "0.1.0"; }

const char* na_status_name(na_status status) {
  switch (status) {
    case NA_OK: return "ok";
    case NA_ERR_NULL_ARGUMENT: return "null_argument";
    case NA_ERR_INTERNAL: return "internal";
    default:
      if (status >= NA_ERR_INVALID_ARGUMENT && status <= NA_ERR_NON_FINITE)
        return nightaug::error_code_name(static_cast<ErrorCode>(status));
      return "unknown";
  }
}

const char* na_last_error(void) { return g_last_error.c_str(); }

// ---- configuration ---------------------------------------------------------

na_status na_config_default(na_config** out) {
  if (!out) return null_argument("out");
  return guarded([&] { *out = wrap(nightaug::RunConfig{}); });
}

na_status na_config_load(const char* path, na_config** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] { *out = wrap(nightaug::load_config(path)); });
}

void na_config_free(na_config* config) { delete config; }

const char* na_config_hash(const na_config* config) { return config ? config->hash.c_str() : ""; }

const char* na_config_json(const na_config* config) { return config ? config->json.c_str() : ""; }

const char* na_config_schema(void) {
  static const std::string text = [] {
    std::string s;
    for (const nightaug::SchemaEntry& e : nightaug::config_schema()) {
      nlohmann::ordered_json j;
      j["key"] = e.key;
      j["default"] = e.default_value;
      j["provenance"] = nightaug::to_string(e.provenance);
      j["description"] = e.description;
      s += j.dump() + "\n";
    }
    return s;
  }();
  return text.c_str();
}

// ---- manifests -------------------------------------------------------------

na_status na_manifest_load(const char* path, na_manifest** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new na_manifest{nightaug::load_manifest(path)}; });
}

void na_manifest_free(na_manifest* manifest) { delete manifest; }

size_t na_manifest_size(const na_manifest* manifest) {
  return manifest ? manifest->manifest.size() : 0;
}

const char* na_manifest_image_id(const na_manifest* manifest, size_t index) {
  if (!manifest || index >= manifest->manifest.size()) return nullptr;
  return manifest->manifest.entries()[index].image_id.c_str();
}

// ---- pipeline --------------------------------------------------------------

na_status na_ingest_ecp(const na_config* config, const char* label_root, const char* image_root,
                        const char* domain, const char* out_manifest, size_t* count) {
  return guarded([&] {
    need(label_root, "label_root");
    need(image_root, "image_root");
    need(domain, "domain");
    need(out_manifest, "out_manifest");
    const nightaug::DatasetManifest m =
        nightaug::ingest_ecp(label_root, image_root, nightaug::parse_domain(domain));
    save_manifest_with_meta(m, out_manifest, nightaug::config_hash(config_or_default(config)),
                            {{"source", "ecp"}, {"domain", domain}});
    if (count) *count = m.size();
  });
}

na_status na_toy_scenes(const na_config* config, const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const nightaug::RunConfig c = config_or_default(config);
    nightaug::ToyDatasetSpec spec;
    spec.day = c.toy.day_train;
    spec.night_train = c.toy.night_train;
    spec.night_test = c.toy.night_test;
    spec.seed = c.seed;
    spec.scene = nightaug::ToySceneOptions::for_size(c.toy.image_size);
    const nightaug::ToyDatasetPaths p = nightaug::write_toy_dataset(out_dir, spec);
    const std::string hash = nightaug::config_hash(c);
    for (const fs::path& f : {p.day, p.night_train, p.night_test})
      nightaug::write_meta(f, "manifest", hash, {{"source", "toy-scenes"}});
  });
}

na_status na_train_detector(const na_config* config, const char* manifest, int guidance,
                            const char* out_path) {
  return guarded([&] {
    need(manifest, "manifest");
    need(out_path, "out_path");
    const nightaug::RunConfig c = config_or_default(config);
    const auto samples = nightaug::load_samples(nightaug::load_manifest(manifest));
    nightaug::save_detector(out_path,
                            guidance ? nightaug::train_guidance_detector(c, samples)
                                     : nightaug::train_baseline_detector(c, samples),
                            nightaug::config_hash(c));
  });
}

na_status na_detect(const char* detector_path, const char* manifest, const char* out_detections,
                    size_t* count) {
  return guarded([&] {
    need(detector_path, "detector_path");
    need(manifest, "manifest");
    need(out_detections, "out_detections");
    const nightaug::ToyDetector det = nightaug::load_detector(detector_path);
    std::vector<nightaug::Detection> dets =
        nightaug::run_detector(det, nightaug::load_manifest(manifest));
    nightaug::sort_detections(dets);
    nightaug::write_text_atomic(out_detections, nightaug::serialize_detections(dets));
    const auto header = nlohmann::ordered_json::parse(nightaug::read_text(detector_path));
    nightaug::write_meta(out_detections, "detections", header.at("config_hash").get<std::string>());
    if (count) *count = dets.size();
  });
}

na_status na_train(const na_config* config, const char* day_manifest, const char* night_manifest,
                   const char* out_dir) {
  return guarded([&] {
    need(day_manifest, "day_manifest");
    need(night_manifest, "night_manifest");
    need(out_dir, "out_dir");
    const nightaug::RunConfig c = config_or_default(config);
    const nightaug::DatasetManifest day = nightaug::load_manifest(day_manifest);
    const nightaug::DatasetManifest night = nightaug::load_manifest(night_manifest);
    const nightaug::TrainingComponents comps =
        nightaug::make_toy_components(c, nightaug::load_samples(day));
    if (c.paths.detector.empty())
      if (auto det = std::dynamic_pointer_cast<nightaug::ToyDetector>(comps.detector))
        nightaug::save_detector(fs::path(out_dir) / "detector.json", *det, nightaug::config_hash(c));
    nightaug::train(c, day, night, comps, out_dir);
  });
}

na_status na_translate(const char* checkpoint, const char* day_manifest, const char* out_dir,
                       int workers, size_t* count) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(day_manifest, "day_manifest");
    need(out_dir, "out_dir");
    const nightaug::Generator g = nightaug::load_generator(checkpoint);
    nightaug::TranslateOptions opt;
    opt.workers = workers <= 0 ? 1 : workers;
    const nightaug::DatasetManifest m =
        nightaug::translate_pool(g, nightaug::load_manifest(day_manifest), out_dir, opt);
    if (count) *count = m.size();
  });
}

na_status na_calibrate_threshold(const char* pairs_path, double* threshold, double* f1) {
  return guarded([&] {
    need(pairs_path, "pairs_path");
    need(threshold, "threshold");
    const auto pairs = nightaug::parse_calibration(nightaug::read_text(pairs_path));
    *threshold = nightaug::calibrate_threshold(pairs);
    if (f1) *f1 = nightaug::f1_at(pairs, *threshold);
  });
}

na_status na_train_classifier(const na_config* config, const char* manifest, const char* out_path) {
  return guarded([&] {
    need(manifest, "manifest");
    need(out_path, "out_path");
    const nightaug::RunConfig c = config_or_default(config);
    const auto samples = nightaug::load_samples(nightaug::load_manifest(manifest));
    nightaug::save_classifier(out_path, nightaug::train_curation_classifier(c, samples),
                              nightaug::config_hash(c));
  });
}

na_status na_curate(const na_config* config, const char* pool_manifest, const char* source_manifest,
                    const char* classifier_path, double threshold, const char* out_manifest,
                    const char* out_report, size_t* kept) {
  return guarded([&] {
    need(pool_manifest, "pool_manifest");
    need(source_manifest, "source_manifest");
    need(out_manifest, "out_manifest");
    need(out_report, "out_report");
    const nightaug::RunConfig c = config_or_default(config);
    const std::string hash = nightaug::config_hash(c);
    const nightaug::DatasetManifest pool = nightaug::load_manifest(pool_manifest);
    const nightaug::DatasetManifest sources = nightaug::load_manifest(source_manifest);
    const nightaug::ToyPatchClassifier classifier =
        classifier_path ? nightaug::load_classifier(classifier_path)
                        : nightaug::train_curation_classifier(c, nightaug::load_samples(sources));
    const auto encoder = nightaug::make_encoder(c);
    const double thr = std::isnan(threshold) ? c.curation.threshold : threshold;
    nightaug::CurationReport report;
    nightaug::DatasetManifest out =
        nightaug::curate_manifest(pool, sources, *encoder, classifier, thr, &report);
    // Kept entries still point into the pool's directory.
    nightaug::DatasetManifest resolved;
    for (nightaug::ManifestEntry e : out.entries()) {
      e.image_path = fs::absolute(pool.resolve(e)).lexically_normal().string();
      resolved.add(std::move(e));
    }
    save_manifest_with_meta(resolved, out_manifest, hash, {{"threshold", thr}});
    nightaug::write_text_atomic(out_report, nightaug::serialize_curation_report(report));
    nightaug::write_meta(out_report, "curation-report", hash,
                         {{"threshold", thr}, {"classifier", classifier.id()}});
    if (kept) *kept = resolved.size();
  });
}

na_status na_mix(const na_config* config, const char* synthetic_manifest, const char* real_manifest,
                 double ratio, const char* out_manifest, size_t* count) {
  return guarded([&] {
    need(synthetic_manifest, "synthetic_manifest");
    need(real_manifest, "real_manifest");
    need(out_manifest, "out_manifest");
    const nightaug::RunConfig c = config_or_default(config);
    nightaug::MixSpec spec{nightaug::load_manifest(synthetic_manifest),
                           nightaug::load_manifest(real_manifest), ratio, c.seed};
    const nightaug::DatasetManifest m = nightaug::build_mixed_set(spec);
    save_manifest_with_meta(m, out_manifest, nightaug::config_hash(c),
                            {{"ratio", ratio},
                             {"synthetic", spec.synthetic.size()},
                             {"real", m.size() - spec.synthetic.size()}});
    if (count) *count = m.size();
  });
}

na_status na_evaluate(const na_config* config, const char* detections, const char* ground_truth,
                      const char* feature_a, const char* feature_b, const char* reference_table,
                      const char* out_report) {
  return guarded([&] {
    need(out_report, "out_report");
    if ((feature_a == nullptr) != (feature_b == nullptr))
      throw nightaug::Error(ErrorCode::kInvalidArgument,
                            "feature manifests must be given together");
    if ((detections == nullptr) != (ground_truth == nullptr))
      throw nightaug::Error(ErrorCode::kInvalidArgument,
                            "detections and ground truth must be given together");
    const nightaug::RunConfig c = config_or_default(config);
    std::vector<nightaug::EvalCurve> curves;
    if (detections) {
      nightaug::LamrOptions lo;
      lo.iou_threshold = c.evaluation.iou_threshold;
      lo.fppi_points = c.evaluation.fppi_points;
      curves = nightaug::evaluate_detections(
          nightaug::parse_detections(nightaug::read_text(detections)),
          nightaug::load_manifest(ground_truth), lo);
    }
    const auto encoder = nightaug::make_encoder(c);
    std::optional<double> fid, wd;
    if (feature_a) {
      const auto fa = nightaug::image_features(*encoder, nightaug::load_manifest(feature_a));
      const auto fb = nightaug::image_features(*encoder, nightaug::load_manifest(feature_b));
      fid = nightaug::frechet_distance(nightaug::fit_gaussian(fa), nightaug::fit_gaussian(fb));
      wd = nightaug::sliced_wasserstein(fa, fb, c.evaluation.sliced_projections,
                                        nightaug::Rng(c.seed).derive("sliced-wd").seed());
    }
    const auto refs = reference_table ? nightaug::load_reference_table(reference_table)
                                      : nightaug::builtin_reference_table();
    const nightaug::EvaluationReport r =
        nightaug::build_report(curves, fid, wd, refs, {}, encoder->id(), nightaug::config_hash(c));
    nightaug::write_text_atomic(out_report, nightaug::serialize_report(r));
  });
}

na_status na_grid(const na_config* config, const double* ratios, size_t num_ratios,
                  const char* synthetic_manifest, const char* real_manifest,
                  const char* test_manifest, const char* detector_path, const char* out_report) {
  return guarded([&] {
    need(ratios, "ratios");
    need(synthetic_manifest, "synthetic_manifest");
    need(real_manifest, "real_manifest");
    need(test_manifest, "test_manifest");
    need(detector_path, "detector_path");
    need(out_report, "out_report");
    const nightaug::RunConfig c = config_or_default(config);
    const nightaug::GridReport g = nightaug::run_experiment_grid(
        c, std::vector<double>(ratios, ratios + num_ratios), nightaug::load_manifest(synthetic_manifest),
        nightaug::load_manifest(real_manifest), nightaug::load_manifest(test_manifest),
        nightaug::load_detector(detector_path));
    nightaug::write_text_atomic(out_report, nightaug::grid_to_json(g).dump(2) + "\n");
  });
}

// ---- verification ----------------------------------------------------------

na_status na_verify_run(const char* run_dir, na_verify_result** out) {
  if (!run_dir) return null_argument("run_dir");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new na_verify_result{nightaug::verify_run(run_dir)}; });
}

void na_verify_free(na_verify_result* result) { delete result; }

int na_verify_ok(const na_verify_result* result) { return result && result->result.ok ? 1 : 0; }

const char* na_verify_hash(const na_verify_result* result) {
  return result ? result->result.config_hash.c_str() : "";
}

size_t na_verify_artifacts(const na_verify_result* result) {
  return result ? result->result.artifacts : 0;
}

size_t na_verify_problem_count(const na_verify_result* result) {
  return result ? result->result.problems.size() : 0;
}

const char* na_verify_problem(const na_verify_result* result, size_t index) {
  if (!result || index >= result->result.problems.size()) return nullptr;
  return result->result.problems[index].c_str();
}

}  // extern "C"
