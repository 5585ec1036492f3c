// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through nightaug.h.

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nightaug/nightaug.h"

namespace {

struct ConfigHandle {
  na_config* ptr = nullptr;
  ~ConfigHandle() { na_config_free(ptr); }
};

int report(na_status s) {
  if (s != NA_OK) std::fprintf(stderr, "error [%s]: %s\n", na_status_name(s), na_last_error());
  return s == NA_OK ? 0 : static_cast<int>(s);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nightaug: day-to-night translation for pedestrian detection data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(na_version()));

  std::string config_path;
  app.add_option("-c,--config", config_path, "JSON run configuration (defaults when omitted)")
      ->check(CLI::ExistingFile);

  ConfigHandle cfg;
  auto load_config = [&]() -> na_status {
    return config_path.empty() ? na_config_default(&cfg.ptr)
                               : na_config_load(config_path.c_str(), &cfg.ptr);
  };

  int exit_code = 0;

  // ---- config ----
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration and its hash");
  bool schema = false;
  show->add_flag("--schema", schema, "Print the schema (key, default, provenance) instead");
  show->callback([&] {
    if (schema) {
      std::fputs(na_config_schema(), stdout);
      return;
    }
    if ((exit_code = report(load_config()))) return;
    std::printf("%s\nconfig_hash %s\n", na_config_json(cfg.ptr), na_config_hash(cfg.ptr));
  });

  // ---- data ----
  auto* ingest = app.add_subcommand("ingest-ecp", "Convert EuroCity Persons labels to a manifest");
  std::string labels, images, domain, out;
  ingest->add_option("--labels", labels, "Label directory")->required();
  ingest->add_option("--images", images, "Image directory")->required();
  ingest->add_option("--domain", domain, "day or night")
      ->required()
      ->check(CLI::IsMember({"day", "night"}));
  ingest->add_option("-o,--out", out, "Output manifest (.jsonl)")->required();
  ingest->callback([&] {
    if ((exit_code = report(load_config()))) return;
    size_t n = 0;
    exit_code = report(na_ingest_ecp(cfg.ptr, labels.c_str(), images.c_str(), domain.c_str(),
                                     out.c_str(), &n));
    if (!exit_code) std::printf("%zu images\n", n);
  });

  auto* toy = app.add_subcommand("toy-scenes", "Write a procedural day/night dataset");
  toy->add_option("-o,--out", out, "Output directory")->required();
  toy->callback([&] {
    if ((exit_code = report(load_config()))) return;
    exit_code = report(na_toy_scenes(cfg.ptr, out.c_str()));
  });

  // ---- detector ----
  std::string manifest, detector;
  auto* train_det = app.add_subcommand("train-detector", "Train the toy pedestrian detector");
  bool plain = false;
  train_det->add_option("--manifest", manifest, "Annotated manifest")->required();
  train_det->add_flag("--plain", plain, "No brightness augmentation (baseline detector)");
  train_det->add_option("-o,--out", out, "Output detector file")->required();
  train_det->callback([&] {
    if ((exit_code = report(load_config()))) return;
    exit_code = report(na_train_detector(cfg.ptr, manifest.c_str(), plain ? 0 : 1, out.c_str()));
  });

  auto* detect = app.add_subcommand("detect", "Run a detector over a manifest");
  detect->add_option("--detector", detector, "Detector file")->required();
  detect->add_option("--manifest", manifest, "Images to scan")->required();
  detect->add_option("-o,--out", out, "Output detections (.jsonl)")->required();
  detect->callback([&] {
    size_t n = 0;
    exit_code = report(na_detect(detector.c_str(), manifest.c_str(), out.c_str(), &n));
    if (!exit_code) std::printf("%zu detections\n", n);
  });

  // ---- generator ----
  std::string day, night;
  auto* train = app.add_subcommand("train", "Train the day-to-night adapters");
  train->add_option("--day", day, "Day manifest")->required();
  train->add_option("--night", night, "Night manifest")->required();
  train->add_option("-o,--out", out, "Run directory")->required();
  train->callback([&] {
    if ((exit_code = report(load_config()))) return;
    exit_code = report(na_train(cfg.ptr, day.c_str(), night.c_str(), out.c_str()));
  });

  std::string checkpoint;
  int workers = 1;
  auto* translate = app.add_subcommand("translate", "Translate a day manifest (resumable)");
  translate->add_option("--checkpoint", checkpoint, "Generator checkpoint")->required();
  translate->add_option("--day", day, "Day manifest")->required();
  translate->add_option("-o,--out", out, "Output directory")->required();
  translate->add_option("-j,--workers", workers, "Parallel workers")
      ->envname("NIGHTAUG_WORKERS")
      ->check(CLI::PositiveNumber);
  translate->callback([&] {
    size_t n = 0;
    exit_code = report(na_translate(checkpoint.c_str(), day.c_str(), out.c_str(), workers, &n));
    if (!exit_code) std::printf("%zu images\n", n);
  });

  // ---- curation ----
  std::string pairs;
  auto* calibrate = app.add_subcommand("calibrate-threshold",
                                       "Pick the similarity threshold maximising F1");
  calibrate->add_option("--pairs", pairs, "Labelled similarity pairs (.jsonl)")->required();
  calibrate->callback([&] {
    double thr = 0, f1 = 0;
    exit_code = report(na_calibrate_threshold(pairs.c_str(), &thr, &f1));
    if (!exit_code) std::printf("threshold %.6f f1 %.6f\n", thr, f1);
  });

  auto* train_cls = app.add_subcommand("train-classifier", "Train the curation crop classifier");
  train_cls->add_option("--manifest", manifest, "Annotated manifest")->required();
  train_cls->add_option("-o,--out", out, "Output classifier file")->required();
  train_cls->callback([&] {
    if ((exit_code = report(load_config()))) return;
    exit_code = report(na_train_classifier(cfg.ptr, manifest.c_str(), out.c_str()));
  });

  std::string pool, sources, classifier, report_path;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  auto* curate = app.add_subcommand("curate", "Filter translations against their sources");
  curate->add_option("--pool", pool, "Synthetic manifest")->required();
  curate->add_option("--sources", sources, "Day manifest the pool was translated from")->required();
  curate->add_option("--classifier", classifier, "Classifier file (trained on sources if omitted)");
  curate->add_option("--threshold", threshold, "Similarity threshold (config value if omitted)");
  curate->add_option("-o,--out", out, "Kept manifest")->required();
  curate->add_option("--report", report_path, "Per-image decisions (.jsonl)")->required();
  curate->callback([&] {
    if ((exit_code = report(load_config()))) return;
    size_t kept = 0;
    exit_code = report(na_curate(cfg.ptr, pool.c_str(), sources.c_str(), opt(classifier), threshold,
                                 out.c_str(), report_path.c_str(), &kept));
    if (!exit_code) std::printf("kept %zu\n", kept);
  });

  // ---- mixing / evaluation ----
  std::string synthetic, real;
  double ratio = 0.0;
  auto* mix = app.add_subcommand("mix", "Inject real night images into a synthetic set");
  mix->add_option("--synthetic", synthetic, "Synthetic manifest")->required();
  mix->add_option("--real", real, "Real night manifest")->required();
  mix->add_option("--ratio", ratio, "Injection ratio")->required()->check(CLI::NonNegativeNumber);
  mix->add_option("-o,--out", out, "Output manifest")->required();
  mix->callback([&] {
    if ((exit_code = report(load_config()))) return;
    size_t n = 0;
    exit_code = report(
        na_mix(cfg.ptr, synthetic.c_str(), real.c_str(), ratio, out.c_str(), &n));
    if (!exit_code) std::printf("%zu entries\n", n);
  });

  std::string detections, ground_truth, feat_a, feat_b, references;
  auto* evaluate = app.add_subcommand("evaluate", "LAMR per subset, optionally FID and sliced WD");
  auto* det_opt = evaluate->add_option("--detections", detections, "Detections (.jsonl)");
  auto* gt_opt = evaluate->add_option("--ground-truth", ground_truth, "Annotated manifest");
  det_opt->needs(gt_opt);
  gt_opt->needs(det_opt);
  auto* fa_opt = evaluate->add_option("--features-a", feat_a, "First manifest for FID / WD");
  auto* fb_opt = evaluate->add_option("--features-b", feat_b, "Second manifest for FID / WD");
  fa_opt->needs(fb_opt);
  fb_opt->needs(fa_opt);
  evaluate->add_option("--references", references, "Reference table (.json)");
  evaluate->add_option("-o,--out", out, "Report (.json)")->required();
  evaluate->callback([&] {
    if ((exit_code = report(load_config()))) return;
    exit_code = report(na_evaluate(cfg.ptr, opt(detections), opt(ground_truth), opt(feat_a),
                                   opt(feat_b), opt(references), out.c_str()));
  });

  std::vector<double> ratios;
  std::string test;
  auto* grid = app.add_subcommand("grid", "Fine-tune and evaluate at each injection ratio");
  grid->add_option("--ratios", ratios, "Injection ratios")->required()->delimiter(',');
  grid->add_option("--synthetic", synthetic, "Synthetic manifest")->required();
  grid->add_option("--real", real, "Real night training manifest")->required();
  grid->add_option("--test", test, "Night test manifest")->required();
  grid->add_option("--detector", detector, "Day-trained detector file")->required();
  grid->add_option("-o,--out", out, "Report (.json)")->required();
  grid->callback([&] {
    if ((exit_code = report(load_config()))) return;
    exit_code = report(na_grid(cfg.ptr, ratios.data(), ratios.size(), synthetic.c_str(),
                               real.c_str(), test.c_str(), detector.c_str(), out.c_str()));
  });

  // ---- verification ----
  std::string run_dir;
  auto* verify = app.add_subcommand("verify-run", "Check that all artifacts share one config hash");
  verify->add_option("dir", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  verify->callback([&] {
    na_verify_result* r = nullptr;
    if ((exit_code = report(na_verify_run(run_dir.c_str(), &r)))) return;
    std::printf("artifacts %zu\nconfig_hash %s\n", na_verify_artifacts(r), na_verify_hash(r));
    for (size_t i = 0; i < na_verify_problem_count(r); ++i)
      std::printf("problem: %s\n", na_verify_problem(r, i));
    const bool ok = na_verify_ok(r) != 0;
    std::printf("%s\n", ok ? "OK" : "MISMATCH");
    na_verify_free(r);
    exit_code = ok ? 0 : 1;
  });

  CLI11_PARSE(app, argc, argv);
  return exit_code;
}
