/* Copyright (C) 2026 The nightaug Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef NIGHTAUG_NIGHTAUG_H_
#define NIGHTAUG_NIGHTAUG_H_

/* Stable C interface to libnightaug. Every call returns an na_status; on
 * failure na_last_error() holds a message for the calling thread. Strings
 * returned by handle accessors live as long as the handle. */

#include <stddef.h>

#if defined(_WIN32)
#define NA_API __declspec(dllexport)
#else
#define NA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum na_status {
  NA_OK = 0,
  NA_ERR_INVALID_ARGUMENT = 1,
  NA_ERR_INVALID_GEOMETRY = 2,
  NA_ERR_SHAPE_MISMATCH = 3,
  NA_ERR_OUT_OF_RANGE = 4,
  NA_ERR_IO = 5,
  NA_ERR_PARSE = 6,
  NA_ERR_NUMERICAL_INSTABILITY = 7,
  NA_ERR_UNDEFINED_METRIC = 8,
  NA_ERR_CONTRACT_VIOLATION = 9,
  NA_ERR_TRANSLATION = 10,
  NA_ERR_NON_FINITE = 11,
  NA_ERR_NULL_ARGUMENT = 100,
  NA_ERR_INTERNAL = 101
} na_status;

NA_API const char* na_version(void);
NA_API const char* na_status_name(na_status status);
NA_API const char* na_last_error(void);

/* ---- configuration ---- */

typedef struct na_config na_config;

NA_API na_status na_config_default(na_config** out);
NA_API na_status na_config_load(const char* path, na_config** out);
NA_API void na_config_free(na_config* config);
NA_API const char* na_config_hash(const na_config* config);
/* Full configuration as indented JSON. */
NA_API const char* na_config_json(const na_config* config);
/* Schema as JSON lines: key, default, provenance, description. */
NA_API const char* na_config_schema(void);

/* ---- manifests ---- */

typedef struct na_manifest na_manifest;

NA_API na_status na_manifest_load(const char* path, na_manifest** out);
NA_API void na_manifest_free(na_manifest* manifest);
NA_API size_t na_manifest_size(const na_manifest* manifest);
NA_API const char* na_manifest_image_id(const na_manifest* manifest, size_t index);

/* ---- pipeline operations ----
 * A NULL config means the built-in defaults. Outputs that are line-delimited
 * get a "<file>.meta.json" sidecar carrying the config hash. */

NA_API na_status na_ingest_ecp(const na_config* config, const char* label_root,
                               const char* image_root, const char* domain,
                               const char* out_manifest, size_t* count);

/* Procedural day/night scenes: day.jsonl, night_train.jsonl, night_test.jsonl. */
NA_API na_status na_toy_scenes(const na_config* config, const char* out_dir);

/* guidance != 0 trains with random brightness gains (the frozen detector
 * used during generator training); 0 trains on the images as given. */
NA_API na_status na_train_detector(const na_config* config, const char* manifest, int guidance,
                                   const char* out_path);
NA_API na_status na_detect(const char* detector_path, const char* manifest,
                           const char* out_detections, size_t* count);

NA_API na_status na_train(const na_config* config, const char* day_manifest,
                          const char* night_manifest, const char* out_dir);

/* Translates a day manifest with a checkpoint into out_dir/synthetic.jsonl.
 * workers <= 0 means one. */
NA_API na_status na_translate(const char* checkpoint, const char* day_manifest,
                              const char* out_dir, int workers, size_t* count);

NA_API na_status na_calibrate_threshold(const char* pairs_path, double* threshold,
                                        double* f1);

NA_API na_status na_train_classifier(const na_config* config, const char* manifest,
                                     const char* out_path);

/* classifier_path may be NULL to train one on the sources. A NaN threshold
 * selects the config's. */
NA_API na_status na_curate(const na_config* config, const char* pool_manifest,
                           const char* source_manifest, const char* classifier_path,
                           double threshold, const char* out_manifest, const char* out_report,
                           size_t* kept);

NA_API na_status na_mix(const na_config* config, const char* synthetic_manifest,
                        const char* real_manifest, double ratio, const char* out_manifest,
                        size_t* count);

/* feature_a / feature_b (both or neither) add FID and sliced WD between two
 * manifests; reference_table may be NULL for the built-in table. */
NA_API na_status na_evaluate(const na_config* config, const char* detections,
                             const char* ground_truth, const char* feature_a,
                             const char* feature_b, const char* reference_table,
                             const char* out_report);

NA_API na_status na_grid(const na_config* config, const double* ratios, size_t num_ratios,
                         const char* synthetic_manifest, const char* real_manifest,
                         const char* test_manifest, const char* detector_path,
                         const char* out_report);

/* ---- run verification ---- */

typedef struct na_verify_result na_verify_result;

NA_API na_status na_verify_run(const char* run_dir, na_verify_result** out);
NA_API void na_verify_free(na_verify_result* result);
NA_API int na_verify_ok(const na_verify_result* result);
NA_API const char* na_verify_hash(const na_verify_result* result);
NA_API size_t na_verify_artifacts(const na_verify_result* result);
NA_API size_t na_verify_problem_count(const na_verify_result* result);
NA_API const char* na_verify_problem(const na_verify_result* result, size_t index);

#ifdef __cplusplus
}
#endif

#endif /* NIGHTAUG_NIGHTAUG_H_ */
