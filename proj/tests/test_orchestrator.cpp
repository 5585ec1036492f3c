// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <optional>
#include <set>

#include "nightaug/error.hpp"
#include "nightaug/image_io.hpp"
#include "nightaug/orchestrator.hpp"
#include "nightaug/toy_scenes.hpp"
#include "test_support.hpp"

using namespace nightaug;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

RunConfig small_config() {
  RunConfig c;
  c.seed = 77;
  c.training.learning_rate = 1e-2;
  c.training.discriminator_learning_rate = 1e-3;
  c.training.steps = 50;
  c.training.ramp_steps = 10;
  c.training.checkpoint_every = 25;
  c.contrastive.num_patches = 8;
  c.contrastive.projection_dim = 16;
  c.components.encoder_input_size = 32;
  c.toy.image_size = 32;
  c.toy.day_train = 6;
  c.toy.night_train = 6;
  c.toy.night_test = 4;
  c.toy.detector_steps = 20;
  c.toy.finetune_steps = 5;
  return c;
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(testutil::scratch_dir("orchestrator"));
    ToyDatasetSpec spec;
    spec.day = 6;
    spec.night_train = 6;
    spec.night_test = 4;
    spec.seed = 5;
    spec.scene.size = 32;
    spec.scene.min_height = 12;
    spec.scene.max_height = 24;
    paths_ = new ToyDatasetPaths(write_toy_dataset(*root_ / "data", spec));
  }
  static void TearDownTestSuite() {
    delete paths_;
    delete root_;
  }

  static fs::path* root_;
  static ToyDatasetPaths* paths_;
};

fs::path* Pipeline::root_ = nullptr;
ToyDatasetPaths* Pipeline::paths_ = nullptr;

DatasetManifest fake_manifest(const std::string& prefix, int n, Domain domain) {
  DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.image_id = prefix + std::to_string(i);
    e.image_path = "/data/" + e.image_id + ".png";
    e.width = 64;
    e.height = 64;
    e.domain = domain;
    if (domain == Domain::kSyntheticNight) e.source_image_id = "day" + std::to_string(i);
    m.add(std::move(e));
  }
  return m;
}

}  // namespace

// ---- mixing ----------------------------------------------------------------

TEST(Mix, InjectionCountFloorsRobustly) {
  EXPECT_EQ(injection_count(4266, 0.05), 213u);
  EXPECT_EQ(injection_count(100, 0.29), 29u);
  EXPECT_EQ(injection_count(100, 0.0), 0u);
  EXPECT_EQ(injection_count(7, 1.0), 7u);
  EXPECT_EQ(injection_count(10, 0.15), 1u);
  EXPECT_EQ(code_of([] { injection_count(10, -0.1); }), ErrorCode::kInvalidArgument);
}

TEST(Mix, SyntheticFirstThenSeededRealSample) {
  const DatasetManifest syn = fake_manifest("syn", 4266, Domain::kSyntheticNight);
  const DatasetManifest real = fake_manifest("real", 500, Domain::kNight);
  const DatasetManifest m = build_mixed_set({syn, real, 0.05, 3});
  ASSERT_EQ(m.size(), 4266u + 213u);
  for (std::size_t i = 0; i < syn.size(); ++i) EXPECT_EQ(m.entries()[i].image_id, syn.entries()[i].image_id);
  std::set<std::string> ids;
  for (const ManifestEntry& e : m.entries()) EXPECT_TRUE(ids.insert(e.image_id).second);
  EXPECT_EQ(m, build_mixed_set({syn, real, 0.05, 3}));
  EXPECT_NE(m, build_mixed_set({syn, real, 0.05, 4}));
}

TEST(Mix, RatioZeroIsSyntheticOnly) {
  const DatasetManifest syn = fake_manifest("syn", 12, Domain::kSyntheticNight);
  const DatasetManifest m = build_mixed_set({syn, DatasetManifest{}, 0.0, 1});
  EXPECT_EQ(m, syn);
}

TEST(Mix, ShortfallAndDuplicatesRejected) {
  const DatasetManifest syn = fake_manifest("a", 10, Domain::kSyntheticNight);
  try {
    build_mixed_set({syn, fake_manifest("r", 3, Domain::kNight), 0.5, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_NE(std::string(e.what()).find("short by 2"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { build_mixed_set({syn, fake_manifest("a", 10, Domain::kNight), 1.0, 1}); }),
            ErrorCode::kInvalidArgument);
}

// ---- toy scenes ------------------------------------------------------------

TEST(ToyScenes, DayBrighterThanNightAndDeterministic) {
  ToySceneOptions o;
  double day = 0, night = 0;
  for (int i = 0; i < 8; ++i) {
    Rng a(i), b(i + 100);
    day += mean_intensity(make_toy_scene("d", Domain::kDay, a, o).pixels);
    night += mean_intensity(make_toy_scene("n", Domain::kNight, b, o).pixels);
  }
  EXPECT_GT(day, 2.5 * night);
  Rng r1(9), r2(9);
  const ImageSample s1 = make_toy_scene("x", Domain::kDay, r1, o);
  const ImageSample s2 = make_toy_scene("x", Domain::kDay, r2, o);
  EXPECT_EQ(s1.pixels.values(), s2.pixels.values());
  EXPECT_EQ(s1.annotations, s2.annotations);
  EXPECT_GE(s1.annotations.size(), 1u);
  EXPECT_LE(s1.annotations.size(), 3u);
}

TEST(ToyScenes, RelocalizerRecoversShiftedRectangle) {
  ToySceneOptions o;
  for (int i = 0; i < 10; ++i) {
    Rng rng(40 + i);
    const ImageSample s = make_toy_scene("r", Domain::kDay, rng, o);
    for (const ObjectAnnotation& a : s.annotations) {
      const BoundingBox hint{a.box.x0 + 2, a.box.y0 - 2, a.box.x1 + 2, a.box.y1 - 2};
      EXPECT_GT(iou(relocalize_rectangle(s.pixels, hint), a.box), 0.85);
    }
  }
}

TEST_F(Pipeline, DatasetFilesAndCounts) {
  EXPECT_EQ(load_manifest(paths_->day).size(), 6u);
  EXPECT_EQ(load_manifest(paths_->night_train).size(), 6u);
  EXPECT_EQ(load_manifest(paths_->night_test).size(), 4u);
  for (const ManifestEntry& e : load_manifest(paths_->night_test).entries())
    EXPECT_EQ(e.domain, Domain::kNight);
}

// ---- training --------------------------------------------------------------

TEST_F(Pipeline, FiftyStepRunLogsCheckpointsAndFreezes) {
  const RunConfig c = small_config();
  const DatasetManifest day = load_manifest(paths_->day), night = load_manifest(paths_->night_train);
  const TrainingComponents comps = make_toy_components(c, load_samples(day));
  const fs::path out = *root_ / "train50";
  const TrainResult r = train(c, day, night, comps, out);

  ASSERT_EQ(r.reports.size(), 50u);
  std::ifstream log(r.log);
  std::string line;
  long prev = -1, lines = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("step").get<long>(), prev + 1);
    prev = j.at("step").get<long>();
    EXPECT_TRUE(j.contains("discriminator"));
    ++lines;
  }
  EXPECT_EQ(lines, 50);
  EXPECT_TRUE(fs::exists(out / "checkpoint_000025.json"));
  EXPECT_TRUE(fs::exists(out / "checkpoint_000050.json"));
  EXPECT_TRUE(fs::exists(r.final_checkpoint));

  EXPECT_EQ(r.encoder_digest_before, r.encoder_digest_after);
  EXPECT_EQ(r.detector_digest_before, r.detector_digest_after);
  EXPECT_EQ(r.backbone_digest_before, r.backbone_digest_after);

  const Generator g = load_generator(r.final_checkpoint);
  EXPECT_EQ(g.header.config_hash, config_hash(c));
  EXPECT_EQ(g.header.step, 50);
  // Trained adapters change the output; the initial generator is the backbone.
  const ImageSample s = load_samples(day).front();
  const Tensor a = g.translate(s.pixels, s.image_id);
  const Tensor b = initial_generator(c).translate(s.pixels, s.image_id);
  EXPECT_NE(a.values(), b.values());
  EXPECT_EQ(a.values(), g.translate(s.pixels, s.image_id).values());
}

TEST_F(Pipeline, TrainingIsBitReproducible) {
  RunConfig c = small_config();
  c.training.steps = 12;
  const DatasetManifest day = load_manifest(paths_->day), night = load_manifest(paths_->night_train);
  const TrainingComponents comps = make_toy_components(c, load_samples(day));
  const TrainResult a = train(c, day, night, comps, *root_ / "repro_a");
  const TrainingComponents comps2 = make_toy_components(c, load_samples(day));
  const TrainResult b = train(c, day, night, comps2, *root_ / "repro_b");
  EXPECT_EQ(read_text(a.log), read_text(b.log));
  EXPECT_EQ(read_text(a.final_checkpoint), read_text(b.final_checkpoint));
}

TEST_F(Pipeline, NonFiniteLossAbortsNamingComponent) {
  RunConfig c = small_config();
  c.training.steps = 3;
  c.training.learning_rate = 1e300;
  const DatasetManifest day = load_manifest(paths_->day), night = load_manifest(paths_->night_train);
  const TrainingComponents comps = make_toy_components(c, load_samples(day));
  try {
    train(c, day, night, comps, *root_ / "nonfinite");
    SUCCEED() << "loss stayed finite";
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::kNonFinite || e.code() == ErrorCode::kNumericalInstability ||
                e.code() == ErrorCode::kTranslation)
        << e.what();
  }
}

// ---- translation -----------------------------------------------------------

TEST_F(Pipeline, DarkeningGeneratorDarkensEveryImage) {
  RunConfig c = small_config();
  c.components.backbone = "toy-darkening";
  const Generator g = initial_generator(c);
  const DatasetManifest day = load_manifest(paths_->day);
  const DatasetManifest out = translate_pool(g, day, *root_ / "dark");
  ASSERT_EQ(out.size(), day.size());
  for (const ManifestEntry& e : out.entries()) {
    ASSERT_TRUE(e.source_image_id.has_value());
    const ImageSample src = load_sample(day, *day.find(*e.source_image_id));
    EXPECT_LT(mean_intensity(read_image(out.resolve(e))), mean_intensity(src.pixels)) << e.image_id;
    EXPECT_EQ(e.objects, src.annotations);
  }
}

TEST_F(Pipeline, TranslateResumesToIdenticalManifest) {
  const RunConfig c = small_config();
  const Generator g = initial_generator(c);
  const DatasetManifest day = load_manifest(paths_->day);
  const fs::path full = *root_ / "pool_full", part = *root_ / "pool_part";
  const DatasetManifest ref = translate_pool(g, day, full);
  TranslateOptions interrupted;
  interrupted.limit = 2;
  EXPECT_EQ(translate_pool(g, day, part, interrupted).size(), 2u);
  EXPECT_FALSE(read_meta(part / "synthetic.jsonl").at("complete").get<bool>());
  TranslateOptions parallel;
  parallel.workers = 3;
  const DatasetManifest resumed = translate_pool(g, day, part, parallel);
  EXPECT_EQ(read_text(full / "synthetic.jsonl"), read_text(part / "synthetic.jsonl"));
  EXPECT_EQ(resumed.size(), ref.size());
  for (const ManifestEntry& e : ref.entries())
    EXPECT_EQ(read_text(full / e.image_path), read_text(part / e.image_path)) << e.image_id;
  // A second pass over a complete pool changes nothing.
  translate_pool(g, day, part);
  EXPECT_EQ(read_text(full / "synthetic.jsonl"), read_text(part / "synthetic.jsonl"));
  EXPECT_TRUE(translate_pool(g, DatasetManifest{}, *root_ / "pool_empty").empty());
}

// ---- grid ------------------------------------------------------------------

TEST_F(Pipeline, GridRowsAndPreconditions) {
  const RunConfig c = small_config();
  const DatasetManifest day = load_manifest(paths_->day);
  const DatasetManifest syn = translate_pool(initial_generator(c), day, *root_ / "grid_pool");
  const DatasetManifest night = load_manifest(paths_->night_train);
  const DatasetManifest test = load_manifest(paths_->night_test);
  const ToyDetector base = train_baseline_detector(c, load_samples(day));

  const GridReport one = run_experiment_grid(c, {0.0}, syn, night, test, base);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_EQ(one.rows[0].train_size, syn.size());
  EXPECT_EQ(one.rows[0].real_count, 0u);
  EXPECT_EQ(one.config_hash, config_hash(c));

  const GridReport two = run_experiment_grid(c, {1.0, 0.5}, syn, night, test, base);
  ASSERT_EQ(two.rows.size(), 2u);
  EXPECT_EQ(two.rows[0].ratio, 0.5);
  EXPECT_EQ(two.rows[1].real_count, 6u);
  const GridReport back = grid_from_json(grid_to_json(two));
  EXPECT_EQ(grid_to_json(back).dump(), grid_to_json(two).dump());

  EXPECT_EQ(code_of([&] { run_experiment_grid(c, {0.2, 0.2}, syn, night, test, base); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { run_experiment_grid(c, {}, syn, night, test, base); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { run_experiment_grid(c, {-0.1}, syn, night, test, base); }),
            ErrorCode::kInvalidArgument);
}

// ---- detector files --------------------------------------------------------

TEST_F(Pipeline, DetectorAndClassifierFilesRoundTrip) {
  const RunConfig c = small_config();
  const auto samples = load_samples(load_manifest(paths_->day));
  const ToyDetector d = train_baseline_detector(c, samples);
  save_detector(*root_ / "det.json", d, config_hash(c));
  EXPECT_EQ(load_detector(*root_ / "det.json").digest(), d.digest());
  const ToyPatchClassifier k = train_curation_classifier(c, samples);
  save_classifier(*root_ / "cls.json", k, config_hash(c));
  EXPECT_EQ(load_classifier(*root_ / "cls.json").id(), k.id());
  std::ofstream(*root_ / "junk.json") << R"({"format": "other"})";
  EXPECT_EQ(code_of([&] { load_detector(*root_ / "junk.json"); }), ErrorCode::kParse);
}

// ---- verification ----------------------------------------------------------

TEST_F(Pipeline, VerifyRunDetectsForeignArtifacts) {
  const RunConfig c = small_config();
  const fs::path run = *root_ / "verify";
  fs::create_directories(run);
  write_run_config(run, c);
  const DatasetManifest day = load_manifest(paths_->day);
  translate_pool(initial_generator(c), day, run / "pool");
  VerifyResult v = verify_run(run);
  EXPECT_TRUE(v.ok) << (v.problems.empty() ? "" : v.problems.front());
  EXPECT_EQ(v.config_hash, config_hash(c));
  EXPECT_EQ(v.artifacts, 2u);

  RunConfig other = c;
  other.seed = 78;
  write_meta(run / "pool" / "extra.jsonl", "manifest", config_hash(other));
  std::ofstream(run / "pool" / "extra.jsonl") << "";
  v = verify_run(run);
  EXPECT_FALSE(v.ok);
  ASSERT_EQ(v.problems.size(), 1u) << v.problems.back();
  EXPECT_NE(v.problems[0].find("extra.jsonl"), std::string::npos);

  std::ofstream(run / "orphan.jsonl") << "";
  EXPECT_EQ(verify_run(run).problems.size(), 2u);
  EXPECT_EQ(code_of([&] { verify_run(run / "missing"); }), ErrorCode::kIo);
}
