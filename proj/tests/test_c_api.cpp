// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through nightaug.h only.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nightaug/nightaug.h"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("nightaug_capi_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallConfig = R"({
  "seed": 9,
  "training": {"learning_rate": 0.01, "steps": 6, "ramp_steps": 2, "checkpoint_every": 3},
  "contrastive": {"num_patches": 8, "projection_dim": 16},
  "components": {"encoder_input_size": 32},
  "toy": {"image_size": 32, "day_train": 4, "night_train": 4, "night_test": 3,
          "detector_steps": 10, "finetune_steps": 3}
})";

}  // namespace

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(na_version(), "0.1.0");
  EXPECT_STREQ(na_status_name(NA_OK), "ok");
  EXPECT_STREQ(na_status_name(NA_ERR_NULL_ARGUMENT), "null_argument");
  EXPECT_STRNE(na_status_name(NA_ERR_IO), "unknown");
  EXPECT_STREQ(na_status_name(static_cast<na_status>(55)), "unknown");
}

TEST(CApi, ConfigDefaultsHashAndErrors) {
  na_config* c = nullptr;
  ASSERT_EQ(na_config_default(&c), NA_OK);
  EXPECT_EQ(std::string(na_config_hash(c)).size(), 16u);
  EXPECT_NE(std::string(na_config_json(c)).find("\"learning_rate\""), std::string::npos);
  na_config_free(c);

  EXPECT_EQ(na_config_default(nullptr), NA_ERR_NULL_ARGUMENT);
  EXPECT_EQ(na_config_load("/nonexistent/cfg.json", &c), NA_ERR_IO);
  EXPECT_NE(std::string(na_last_error()).find("nonexistent"), std::string::npos);

  const fs::path dir = fresh_dir("config");
  std::ofstream(dir / "bad.json") << R"({"training": {"unknown_key": 1}})";
  EXPECT_EQ(na_config_load((dir / "bad.json").c_str(), &c), NA_ERR_INVALID_ARGUMENT);

  const std::string schema = na_config_schema();
  EXPECT_NE(schema.find("\"provenance\":\"paper\""), std::string::npos);
  EXPECT_NE(schema.find("\"provenance\":\"decision\""), std::string::npos);
}

TEST(CApi, ToyPipelineVerifies) {
  const fs::path dir = fresh_dir("pipeline");
  std::ofstream(dir / "cfg.json") << kSmallConfig;
  na_config* c = nullptr;
  ASSERT_EQ(na_config_load((dir / "cfg.json").c_str(), &c), NA_OK) << na_last_error();

  ASSERT_EQ(na_toy_scenes(c, (dir / "data").c_str()), NA_OK) << na_last_error();
  na_manifest* m = nullptr;
  ASSERT_EQ(na_manifest_load((dir / "data" / "day.jsonl").c_str(), &m), NA_OK);
  EXPECT_EQ(na_manifest_size(m), 4u);
  EXPECT_NE(na_manifest_image_id(m, 0), nullptr);
  EXPECT_EQ(na_manifest_image_id(m, 4), nullptr);
  na_manifest_free(m);

  const std::string day = (dir / "data" / "day.jsonl").string();
  const std::string night = (dir / "data" / "night_train.jsonl").string();
  const std::string test = (dir / "data" / "night_test.jsonl").string();
  const fs::path run = dir / "run";
  ASSERT_EQ(na_train(c, day.c_str(), night.c_str(), run.c_str()), NA_OK) << na_last_error();
  EXPECT_TRUE(fs::exists(run / "checkpoint_final.json"));
  EXPECT_TRUE(fs::exists(run / "detector.json"));

  size_t n = 0;
  ASSERT_EQ(na_translate((run / "checkpoint_final.json").c_str(), day.c_str(), (run / "pool").c_str(),
                         2, &n),
            NA_OK)
      << na_last_error();
  EXPECT_EQ(n, 4u);
  const std::string pool = (run / "pool" / "synthetic.jsonl").string();

  ASSERT_EQ(na_mix(c, pool.c_str(), night.c_str(), 0.5, (run / "mixed.jsonl").c_str(), &n), NA_OK)
      << na_last_error();
  EXPECT_EQ(n, 6u);

  ASSERT_EQ(na_train_detector(c, day.c_str(), 0, (run / "baseline.json").c_str()), NA_OK);
  ASSERT_EQ(na_detect((run / "baseline.json").c_str(), test.c_str(), (run / "dets.jsonl").c_str(), &n),
            NA_OK)
      << na_last_error();
  ASSERT_EQ(na_evaluate(c, (run / "dets.jsonl").c_str(), test.c_str(), day.c_str(), night.c_str(),
                        nullptr, (run / "report.json").c_str()),
            NA_OK)
      << na_last_error();
  EXPECT_NE(slurp(run / "report.json").find("config_hash"), std::string::npos);

  size_t kept = 0;
  ASSERT_EQ(na_curate(c, pool.c_str(), day.c_str(), nullptr, NAN, (run / "kept.jsonl").c_str(),
                      (run / "curation.jsonl").c_str(), &kept),
            NA_OK)
      << na_last_error();
  EXPECT_LE(kept, 4u);

  const double ratios[] = {0.0, 1.0};
  ASSERT_EQ(na_grid(c, ratios, 2, pool.c_str(), night.c_str(), test.c_str(),
                    (run / "baseline.json").c_str(), (run / "grid.json").c_str()),
            NA_OK)
      << na_last_error();
  const double dup[] = {0.2, 0.2};
  EXPECT_EQ(na_grid(c, dup, 2, pool.c_str(), night.c_str(), test.c_str(),
                    (run / "baseline.json").c_str(), (run / "grid2.json").c_str()),
            NA_ERR_INVALID_ARGUMENT);

  na_verify_result* v = nullptr;
  ASSERT_EQ(na_verify_run(run.c_str(), &v), NA_OK) << na_last_error();
  for (size_t i = 0; i < na_verify_problem_count(v); ++i) ADD_FAILURE() << na_verify_problem(v, i);
  EXPECT_TRUE(na_verify_ok(v));
  EXPECT_STREQ(na_verify_hash(v), na_config_hash(c));
  EXPECT_GE(na_verify_artifacts(v), 10u);
  EXPECT_EQ(na_verify_problem(v, 999), nullptr);
  na_verify_free(v);
  na_config_free(c);
}

TEST(CApi, CalibrateThreshold) {
  const fs::path dir = fresh_dir("calibrate");
  std::ofstream(dir / "pairs.jsonl") << R"({"image_id":"a","score":0.9,"label":"accepted"}
{"image_id":"b","score":0.8,"label":"accepted"}
{"image_id":"c","score":0.3,"label":"rejected"}
{"image_id":"d","score":0.85,"label":"rejected"}
)";
  double thr = 0, f1 = 0;
  ASSERT_EQ(na_calibrate_threshold((dir / "pairs.jsonl").c_str(), &thr, &f1), NA_OK) << na_last_error();
  EXPECT_GT(f1, 0.79);
  EXPECT_GT(thr, 0.3);
  EXPECT_LE(thr, 0.8);
  EXPECT_EQ(na_calibrate_threshold(nullptr, &thr, &f1), NA_ERR_NULL_ARGUMENT);
}

TEST(CApi, NullArgumentsAreReported) {
  size_t n = 0;
  EXPECT_EQ(na_mix(nullptr, nullptr, "x", 0.1, "y", &n), NA_ERR_NULL_ARGUMENT);
  EXPECT_NE(std::string(na_last_error()).find("synthetic_manifest"), std::string::npos);
  EXPECT_EQ(na_verify_run(nullptr, nullptr), NA_ERR_NULL_ARGUMENT);
  EXPECT_EQ(na_manifest_size(nullptr), 0u);
}
