// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "nightaug/contrastive.hpp"
#include "nightaug/error.hpp"
#include "nightaug/image_io.hpp"
#include "nightaug/optim.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kCheckpointFormat = "nightaug-checkpoint-v1";
constexpr const char* kDetectorFormat = "nightaug-toy-detector-v1";
constexpr const char* kClassifierFormat = "nightaug-toy-classifier-v1";

json parse_json(const std::string& text, const fs::path& where) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, where.string() + ": " + e.what());
  }
}

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  std::vector<std::thread> pool;
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string step_name(long step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_%06ld.json", step);
  return buf;
}

AdapterSet make_adapters(const RunConfig& config, const GeneratorBackbone& backbone) {
  LoraOptions lo;
  lo.scale = config.lora.scale;
  return attach_adapters(backbone, resolve_targets(config, backbone), config.lora.rank,
                         Rng(config.seed).derive("lora").seed(), lo);
}

int condition_dims(const GeneratorBackbone& backbone) {
  (void)backbone;
  return ToyBackbone::kCondition;
}

void write_checkpoint(const fs::path& path, const RunConfig& config, const std::string& hash,
                      long step, const GeneratorBackbone& backbone, const SemanticEncoder& encoder,
                      const AdapterSet& adapters, const std::vector<ProjectionHead>& heads,
                      const Discriminator& disc) {
  json j;
  j["format"] = kCheckpointFormat;
  j["config_hash"] = hash;
  j["seed"] = config.seed;
  j["step"] = step;
  j["backbone"] = backbone.id();
  j["encoder"] = encoder.id();
  j["config"] = config_to_json(config);
  j["adapters"] = adapters_to_json(adapters);
  j["skip"] = json::array();
  for (const ad::Var& p : backbone.skip_parameters()) j["skip"].push_back(tensor_to_json(p.value()));
  j["heads"] = json::array();
  for (const ProjectionHead& h : heads) {
    json hj = json::array();
    for (const ad::Var& p : h.parameters()) hj.push_back(tensor_to_json(p.value()));
    j["heads"].push_back(hj);
  }
  j["discriminator"] = json::array();
  for (const ad::Var& p : disc.parameters()) j["discriminator"].push_back(tensor_to_json(p.value()));
  write_text_atomic(path, j.dump());
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

// ---- artifact hashing ------------------------------------------------------

fs::path meta_path(const fs::path& artifact) {
  return fs::path(artifact.string() + ".meta.json");
}

void write_meta(const fs::path& artifact, const std::string& kind, const std::string& config_hash,
                const json& extra) {
  json j;
  j["kind"] = kind;
  j["config_hash"] = config_hash;
  j["artifact"] = artifact.filename().string();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text_atomic(meta_path(artifact), j.dump(2) + "\n");
}

json read_meta(const fs::path& artifact) {
  const fs::path p = meta_path(artifact);
  return parse_json(read_text(p), p);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + tmp.string());
    out << text;
    out.flush();
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::kIo, "cannot move " + tmp.string() + " to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t parameter_digest(const std::vector<ad::Var>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ad::Var& p : params) {
    const auto& v = p.value().values();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)),
                h);
  }
  return h;
}

std::vector<ImageSample> load_samples(const DatasetManifest& manifest) {
  std::vector<ImageSample> out;
  out.reserve(manifest.size());
  for (const ManifestEntry& e : manifest.entries()) out.push_back(load_sample(manifest, e));
  return out;
}

// ---- components ------------------------------------------------------------

std::shared_ptr<GeneratorBackbone> make_backbone(const std::string& id) {
  if (id == "toy-identity") return std::make_shared<ToyBackbone>(ToyMode::kIdentity);
  if (id == "toy-darkening") return std::make_shared<ToyBackbone>(ToyMode::kDarkening);
  fail(ErrorCode::kInvalidArgument, "unknown backbone '" + id + "'");
}

std::shared_ptr<const SemanticEncoder> make_encoder(const RunConfig& config) {
  const std::string& id = config.components.encoder;
  const int size = config.components.encoder_input_size;
  if (id == "toy-patch-statistics")
    return std::make_shared<ToyPatchEncoder>(ToyEncoderMode::kPatchStatistics, size);
  if (id == "toy-patch-normalized")
    return std::make_shared<ToyPatchEncoder>(ToyEncoderMode::kNormalizedStatistics, size);
  if (id == "toy-mean-intensity")
    return std::make_shared<ToyPatchEncoder>(ToyEncoderMode::kMeanIntensity, size);
  fail(ErrorCode::kInvalidArgument, "unknown encoder '" + id + "'");
}

std::vector<int> resolve_layers(const RunConfig& config, const SemanticEncoder& encoder) {
  if (config.contrastive.layers.empty()) return default_layers(encoder.num_layers());
  for (int l : config.contrastive.layers)
    require(l >= 0 && l < encoder.num_layers(), ErrorCode::kOutOfRange,
            "contrastive layer " + std::to_string(l) + " outside the encoder");
  return config.contrastive.layers;
}

std::vector<std::string> resolve_targets(const RunConfig& config, const GeneratorBackbone& backbone) {
  if (!config.lora.targets.empty()) return config.lora.targets;
  if (dynamic_cast<const ToyBackbone*>(&backbone)) return ToyBackbone::default_targets();
  std::vector<std::string> all;
  for (const auto& [name, shape] : backbone.named_weights()) all.push_back(name);
  return all;
}

NoiseSchedule make_schedule(const RunConfig& config) {
  return NoiseSchedule::variance_preserving(config.noise.alpha, config.noise.timestep);
}

namespace {

ToyDetector train_detector(const RunConfig& config, const std::vector<ImageSample>& samples,
                           bool augment) {
  ToyDetector detector(Rng(config.seed).derive("detector/init").seed());
  DetectorTrainOptions opt;
  opt.steps = config.toy.detector_steps;
  opt.learning_rate = config.toy.detector_learning_rate;
  opt.weights = {config.loss.det_box, config.loss.det_cls, config.loss.det_dfl};
  if (augment) {
    opt.min_gain = config.toy.guidance_min_gain;
    opt.max_gain = config.toy.guidance_max_gain;
  }
  Rng rng = Rng(config.seed).derive(augment ? "detector/guidance" : "detector/baseline");
  train_toy_detector(detector, samples, opt, rng);
  return detector;
}

}  // namespace

ToyDetector train_guidance_detector(const RunConfig& config, const std::vector<ImageSample>& samples) {
  return train_detector(config, samples, true);
}

ToyDetector train_baseline_detector(const RunConfig& config, const std::vector<ImageSample>& samples) {
  return train_detector(config, samples, false);
}

void save_detector(const fs::path& path, const ToyDetector& detector, const std::string& config_hash) {
  json j;
  j["format"] = kDetectorFormat;
  j["config_hash"] = config_hash;
  j["detector"] = detector.to_json();
  write_text_atomic(path, j.dump());
}

ToyDetector load_detector(const fs::path& path) {
  const json j = parse_json(read_text(path), path);
  require(j.value("format", "") == kDetectorFormat, ErrorCode::kParse,
          path.string() + " is not a toy detector file");
  try {
    return ToyDetector::from_json(j.at("detector"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

ToyPatchClassifier train_curation_classifier(const RunConfig& config,
                                             const std::vector<ImageSample>& samples) {
  ToyPatchClassifier classifier(Rng(config.seed).derive("classifier/init").seed());
  Rng rng = Rng(config.seed).derive("classifier/train");
  train_patch_classifier(classifier, samples, ClassifierTrainOptions{}, rng);
  return classifier;
}

void save_classifier(const fs::path& path, const ToyPatchClassifier& classifier,
                     const std::string& config_hash) {
  json j;
  j["format"] = kClassifierFormat;
  j["config_hash"] = config_hash;
  j["classifier"] = classifier.to_json();
  write_text_atomic(path, j.dump());
}

ToyPatchClassifier load_classifier(const fs::path& path) {
  const json j = parse_json(read_text(path), path);
  require(j.value("format", "") == kClassifierFormat, ErrorCode::kParse,
          path.string() + " is not a toy classifier file");
  try {
    return ToyPatchClassifier::from_json(j.at("classifier"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

TrainingComponents make_toy_components(const RunConfig& config, const std::vector<ImageSample>& day) {
  require(config.components.detector == "toy", ErrorCode::kInvalidArgument,
          "unknown detector '" + config.components.detector + "'");
  require(config.components.discriminator == "toy", ErrorCode::kInvalidArgument,
          "unknown discriminator '" + config.components.discriminator + "'");
  TrainingComponents c;
  c.backbone = make_backbone(config.components.backbone);
  c.encoder = make_encoder(config);
  auto det = std::make_shared<ToyDetector>(config.paths.detector.empty()
                                               ? train_guidance_detector(config, day)
                                               : load_detector(config.paths.detector));
  det->set_frozen(true);
  c.detector = det;
  c.discriminator =
      std::make_shared<ToyDiscriminator>(Rng(config.seed).derive("discriminator").seed(),
                                         std::make_shared<ToyPatchEncoder>(
                                             ToyEncoderMode::kPatchStatistics,
                                             config.components.encoder_input_size));
  return c;
}

// ---- training --------------------------------------------------------------

TrainResult train(const RunConfig& config, const DatasetManifest& day, const DatasetManifest& night,
                  const TrainingComponents& components, const fs::path& out_dir) {
  config.validate();
  require(components.backbone && components.encoder && components.detector &&
              components.discriminator,
          ErrorCode::kInvalidArgument, "train: every component must be loaded");
  require(components.detector->frozen(), ErrorCode::kContractViolation,
          "train: the guidance detector must be frozen");
  require(!day.empty() && !night.empty(), ErrorCode::kInvalidArgument,
          "train: day and night manifests must be non-empty");
  fs::create_directories(out_dir);

  const std::string hash = config_hash(config);
  const GeneratorBackbone& backbone = *components.backbone;
  const SemanticEncoder& encoder = *components.encoder;
  const Discriminator& disc = *components.discriminator;

  const std::vector<ImageSample> day_s = load_samples(day);
  const std::vector<ImageSample> night_s = load_samples(night);
  for (const ImageSample& s : day_s) check_divisible(backbone, s.pixels);

  const Rng root(config.seed);
  AdapterSet adapters = make_adapters(config, backbone);
  const std::vector<int> layers = resolve_layers(config, encoder);
  Rng head_rng = root.derive("heads");
  const std::vector<ProjectionHead> heads =
      make_heads(encoder, layers, config.contrastive.projection_dim, head_rng);
  const NoiseSchedule schedule = make_schedule(config);
  const Tensor condition = prompt_embedding(config.prompt, condition_dims(backbone));
  const DetectorWeights det_w{config.loss.det_box, config.loss.det_cls, config.loss.det_dfl};
  const LossWeights weights{config.loss.src, config.loss.hdce, config.loss.det, config.loss.idt,
                            config.loss.adv};
  const RampSchedule ramp{config.training.ramp_steps};

  std::vector<ad::Var> g_params = adapters.parameters();
  for (const ad::Var& p : backbone.skip_parameters()) g_params.push_back(p);
  for (const ProjectionHead& h : heads)
    for (const ad::Var& p : h.parameters()) g_params.push_back(p);
  AdamOptions g_opt_options;
  g_opt_options.learning_rate = config.training.learning_rate;
  g_opt_options.weight_decay = config.training.weight_decay;
  Adam g_opt(g_params, g_opt_options);
  AdamOptions d_opt_options = g_opt_options;
  d_opt_options.learning_rate = config.training.discriminator_learning_rate;
  Adam d_opt(disc.parameters(), d_opt_options);

  TrainResult result;
  result.encoder_digest_before = encoder.frozen_digest();
  result.detector_digest_before = parameter_digest(components.detector->parameters());
  result.backbone_digest_before = backbone.frozen_digest();

  write_run_config(out_dir, config);
  result.log = out_dir / "train_log.jsonl";
  const fs::path timing = out_dir / "train_timing.jsonl";
  std::ofstream log(result.log, std::ios::trunc);
  std::ofstream tlog(timing, std::ios::trunc);
  require(log && tlog, ErrorCode::kIo, "cannot open training logs in " + out_dir.string());

  auto checkpoint = [&](const fs::path& path, long step) {
    try {
      write_checkpoint(path, config, hash, step, backbone, encoder, adapters, heads, disc);
    } catch (const Error& e) {
      fail(ErrorCode::kIo, std::string("checkpoint write failed: ") + e.what());
    }
  };

  const int n_day = static_cast<int>(day_s.size()), n_night = static_cast<int>(night_s.size());
  for (long step = 0; step < config.training.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng step_rng = root.derive("train/step/" + std::to_string(step));
    const ImageSample& src = day_s[static_cast<std::size_t>(step_rng.uniform_int(0, n_day - 1))];
    const ImageSample& tgt = night_s[static_cast<std::size_t>(step_rng.uniform_int(0, n_night - 1))];
    Rng noise_rng = step_rng.derive("noise");
    Rng idt_rng = step_rng.derive("noise/identity");
    Rng patch_rng = step_rng.derive("patches");

    const ad::Var x_s = ad::constant(src.pixels);
    const ad::Var x_t = ad::constant(tgt.pixels);
    const ad::Var fake = translate(backbone, &adapters, schedule, x_s, condition, noise_rng);

    double d_value = 0.0;
    for (int k = 0; k < config.training.discriminator_steps; ++k) {
      d_opt.zero_grad();
      const ad::Var d_loss = discriminator_loss(disc, {x_t}, {fake});
      d_value = d_loss.item();
      require(std::isfinite(d_value), ErrorCode::kNonFinite,
              "non-finite discriminator loss at step " + std::to_string(step));
      ad::backward(d_loss);
      d_opt.step();
    }

    const PatchFeatureStack stack_s = extract_stack(encoder, x_s, layers);
    const PatchFeatureStack stack_t = extract_stack(encoder, fake, layers);
    const PatchIndexSet idx = sample_indices(stack_s, config.contrastive.num_patches, patch_rng);
    const std::vector<ad::Var> f_s = project(stack_s, idx, heads);
    const std::vector<ad::Var> f_t = project(stack_t, idx, heads);

    LossComponents parts;
    parts.src = src_loss(f_s, f_t);
    parts.hdce = hdce_loss(f_t, f_s, config.contrastive.tau, config.contrastive.gamma);
    parts.det = detector_consistency_loss(*components.detector, fake, src.annotations, det_w);
    parts.idt = identity_loss(translate(backbone, &adapters, schedule, x_t, condition, idt_rng), x_t);
    parts.adv = generator_adversarial_loss(disc, {fake}, config.training.nonsaturating_adversarial);

    LossReport report;
    const ad::Var total = total_loss(parts, weights, ramp, step, &report);
    for (const auto& e : report.entries)
      require(std::isfinite(e.raw), ErrorCode::kNonFinite,
              "non-finite " + e.name + " loss at step " + std::to_string(step));
    require(std::isfinite(report.total), ErrorCode::kNonFinite,
            "non-finite total loss at step " + std::to_string(step));

    g_opt.zero_grad();
    ad::backward(total);
    for (const ad::Var& p : g_params)
      require(all_finite(p.grad()), ErrorCode::kNonFinite,
              "non-finite generator gradient at step " + std::to_string(step));
    g_opt.step();

    json line = report.to_json();
    line["discriminator"] = d_value;
    log << line.dump() << '\n';
    log.flush();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    tlog << json{{"step", step}, {"seconds", secs}}.dump() << '\n';
    result.reports.push_back(std::move(report));

    if ((step + 1) % config.training.checkpoint_every == 0)
      checkpoint(out_dir / step_name(step + 1), step + 1);
  }
  log.close();
  tlog.close();
  require(static_cast<bool>(log), ErrorCode::kIo, "training log write failed");

  result.final_checkpoint = out_dir / "checkpoint_final.json";
  checkpoint(result.final_checkpoint, config.training.steps);
  write_meta(result.log, "training-log", hash, json{{"records", result.reports.size()}});
  write_meta(timing, "training-timing", hash);

  result.encoder_digest_after = encoder.frozen_digest();
  result.detector_digest_after = parameter_digest(components.detector->parameters());
  result.backbone_digest_after = backbone.frozen_digest();
  return result;
}

Tensor Generator::translate(const Tensor& image, const std::string& image_id) const {
  Rng rng = Rng(config.seed).derive("translate/" + image_id);
  return nightaug::translate(*backbone, &adapters, schedule, ad::constant(image), condition, rng)
      .value();
}

Generator initial_generator(const RunConfig& config) {
  config.validate();
  Generator g;
  g.config = config;
  g.backbone = make_backbone(config.components.backbone);
  g.adapters = make_adapters(config, *g.backbone);
  g.schedule = make_schedule(config);
  g.condition = prompt_embedding(config.prompt, condition_dims(*g.backbone));
  g.header.config_hash = config_hash(config);
  g.header.seed = config.seed;
  g.header.backbone = g.backbone->id();
  return g;
}

Generator load_generator(const fs::path& checkpoint) {
  const json j = parse_json(read_text(checkpoint), checkpoint);
  require(j.value("format", "") == kCheckpointFormat, ErrorCode::kParse,
          checkpoint.string() + " is not a generator checkpoint");
  try {
    Generator g = initial_generator(config_from_json(j.at("config")));
    require(g.header.config_hash == j.at("config_hash").get<std::string>(), ErrorCode::kParse,
            checkpoint.string() + ": config hash does not match its embedded config");
    require(g.backbone->id() == j.at("backbone").get<std::string>(), ErrorCode::kParse,
            checkpoint.string() + ": backbone mismatch");
    g.header.step = j.at("step").get<long>();
    g.header.encoder = j.at("encoder").get<std::string>();
    g.adapters = adapters_from_json(j.at("adapters"));
    const auto skips = g.backbone->skip_parameters();
    const json& sj = j.at("skip");
    require(sj.size() == skips.size(), ErrorCode::kParse, "checkpoint skip parameter count");
    for (std::size_t i = 0; i < skips.size(); ++i) {
      Tensor t = tensor_from_json(sj[i]);
      require(t.same_shape(skips[i].value()), ErrorCode::kParse, "checkpoint skip parameter shape");
      ad::Var v = skips[i];
      v.mutable_value() = std::move(t);
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, checkpoint.string() + ": " + e.what());
  }
}

// ---- pool translation ------------------------------------------------------

DatasetManifest translate_pool(const Generator& generator, const DatasetManifest& day,
                               const fs::path& out_dir, const TranslateOptions& options) {
  fs::create_directories(out_dir / "images");
  const auto& entries = day.entries();
  std::vector<std::optional<ManifestEntry>> produced(entries.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string id = synthetic_id_for(entries[i].image_id);
    if (!fs::exists(out_dir / "images" / (id + ".ppm"))) todo.push_back(i);
  }
  if (options.limit && static_cast<std::size_t>(*options.limit) < todo.size())
    todo.resize(static_cast<std::size_t>(std::max(0, *options.limit)));
  const std::set<std::size_t> fresh(todo.begin(), todo.end());

  parallel_for(entries.size(), options.workers, [&](std::size_t i) {
    const ManifestEntry& e = entries[i];
    const std::string id = synthetic_id_for(e.image_id);
    const std::string rel = "images/" + id + ".ppm";
    const fs::path file = out_dir / rel;
    const ImageSample source = load_sample(day, e);
    Tensor pixels;
    if (fresh.count(i)) {
      pixels = generator.translate(source.pixels, source.image_id);
      const fs::path tmp = fs::path(file.string() + ".tmp.ppm");
      write_ppm16(tmp, pixels);
      fs::rename(tmp, file);
    } else if (fs::exists(file)) {
      pixels = read_image(file);
    } else {
      return;  // beyond the limit
    }
    std::optional<AnnotationScale> scale;
    if (pixels.dim(0) != source.height() || pixels.dim(1) != source.width())
      scale = AnnotationScale{static_cast<double>(pixels.dim(1)) / source.width(),
                              static_cast<double>(pixels.dim(0)) / source.height()};
    produced[i] = entry_from_sample(inherit_annotations(source, std::move(pixels), scale, id), rel);
  });

  DatasetManifest out;
  out.set_base_dir(out_dir);
  for (auto& e : produced)
    if (e) out.add(std::move(*e));
  const fs::path path = out_dir / "synthetic.jsonl";
  write_text_atomic(path, serialize_manifest(out));
  write_meta(path, "manifest", generator.header.config_hash,
             json{{"backbone", generator.header.backbone},
                  {"step", generator.header.step},
                  {"complete", out.size() == entries.size()}});
  return out;
}

// ---- mixing ----------------------------------------------------------------

std::size_t injection_count(std::size_t synthetic_count, double ratio) {
  require(std::isfinite(ratio) && ratio >= 0, ErrorCode::kInvalidArgument,
          "injection ratio must be finite and >= 0");
  const double exact = ratio * static_cast<double>(synthetic_count);
  return static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
}

DatasetManifest build_mixed_set(const MixSpec& spec) {
  const std::size_t want = injection_count(spec.synthetic.size(), spec.ratio);
  require(spec.real.size() >= want, ErrorCode::kInvalidArgument,
          "mix needs " + std::to_string(want) + " real entries but only " +
              std::to_string(spec.real.size()) + " are available (short by " +
              std::to_string(want - spec.real.size()) + ")");
  auto absolute = [](const DatasetManifest& m, ManifestEntry e) {
    e.image_path = fs::absolute(m.resolve(e)).lexically_normal().string();
    return e;
  };
  DatasetManifest out;
  for (const ManifestEntry& e : spec.synthetic.entries()) out.add(absolute(spec.synthetic, e));
  Rng rng = Rng(spec.seed).derive("mix");
  std::vector<int> pick =
      rng.sample_without_replacement(static_cast<int>(spec.real.size()), static_cast<int>(want));
  for (int i : pick) {
    const ManifestEntry& e = spec.real.entries()[static_cast<std::size_t>(i)];
    require(out.find(e.image_id) == nullptr, ErrorCode::kInvalidArgument,
            "mix: image id '" + e.image_id + "' appears in both manifests");
    out.add(absolute(spec.real, e));
  }
  return out;
}

// ---- evaluation ------------------------------------------------------------

std::vector<EvalImage> eval_images(const DatasetManifest& manifest) {
  std::vector<EvalImage> out;
  for (const ManifestEntry& e : manifest.entries()) out.push_back({e.image_id, e.objects});
  return out;
}

std::vector<Detection> run_detector(const ToyDetector& detector, const DatasetManifest& manifest) {
  std::vector<Detection> out;
  for (const ManifestEntry& e : manifest.entries()) {
    const ImageSample s = load_sample(manifest, e);
    for (Detection& d : detector.detect(s.pixels, s.image_id)) out.push_back(std::move(d));
  }
  return out;
}

std::vector<EvalCurve> evaluate_detections(const std::vector<Detection>& detections,
                                           const DatasetManifest& ground_truth,
                                           const LamrOptions& options) {
  const std::vector<EvalImage> images = eval_images(ground_truth);
  std::vector<EvalCurve> out;
  for (const SubsetSpec& s : standard_subsets()) {
    try {
      out.push_back(lamr(detections, images, s, options));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUndefinedMetric) throw;
    }
  }
  return out;
}

std::vector<std::vector<double>> image_features(const SemanticEncoder& encoder,
                                                const DatasetManifest& manifest) {
  const int layer = default_layers(encoder.num_layers()).back();
  std::vector<std::vector<double>> out;
  for (const ManifestEntry& e : manifest.entries()) {
    const ImageSample s = load_sample(manifest, e);
    const PatchFeatureStack st = extract_stack(encoder, ad::constant(s.pixels), {layer});
    const Tensor m = ad::mean_rows(st.features[0]).value();
    out.emplace_back(m.values().begin(), m.values().end());
  }
  return out;
}

// ---- experiment grid -------------------------------------------------------

double GridRow::lamr_of(const std::string& subset) const {
  for (const SubsetResult& r : lamr)
    if (r.subset == subset) return r.lamr;
  fail(ErrorCode::kUndefinedMetric, "grid row has no '" + subset + "' result");
}

namespace {

std::vector<SubsetResult> summarize(const std::vector<EvalCurve>& curves) {
  std::vector<SubsetResult> out;
  for (const EvalCurve& c : curves) out.push_back({c.subset, c.lamr, c.num_images, c.num_ground_truth});
  return out;
}

json subsets_to_json(const std::vector<SubsetResult>& rs) {
  json a = json::array();
  for (const SubsetResult& r : rs)
    a.push_back({{"subset", r.subset},
                 {"lamr", r.lamr},
                 {"num_images", r.num_images},
                 {"num_ground_truth", r.num_ground_truth}});
  return a;
}

std::vector<SubsetResult> subsets_from_json(const json& a) {
  std::vector<SubsetResult> out;
  for (const json& r : a)
    out.push_back({r.at("subset").get<std::string>(), r.at("lamr").get<double>(),
                   r.at("num_images").get<int>(), r.at("num_ground_truth").get<int>()});
  return out;
}

}  // namespace

GridReport run_experiment_grid(const RunConfig& config, const std::vector<double>& ratios,
                               const DatasetManifest& synthetic, const DatasetManifest& real_night,
                               const DatasetManifest& test, const ToyDetector& base) {
  require(!ratios.empty(), ErrorCode::kInvalidArgument, "grid needs at least one ratio");
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    require(std::isfinite(sorted[i]) && sorted[i] >= 0, ErrorCode::kInvalidArgument,
            "grid ratios must be finite and >= 0");
    require(i == 0 || sorted[i] != sorted[i - 1], ErrorCode::kInvalidArgument,
            "duplicate grid ratio " + std::to_string(sorted[i]));
  }
  LamrOptions lo;
  lo.iou_threshold = config.evaluation.iou_threshold;
  lo.fppi_points = config.evaluation.fppi_points;

  GridReport report;
  report.config_hash = config_hash(config);
  report.baseline = summarize(evaluate_detections(run_detector(base, test), test, lo));

  DetectorTrainOptions ft;
  ft.steps = config.toy.finetune_steps;
  ft.learning_rate = config.toy.detector_learning_rate;
  ft.weights = {config.loss.det_box, config.loss.det_cls, config.loss.det_dfl};
  for (double r : sorted) {
    const DatasetManifest mixed = build_mixed_set({synthetic, real_night, r, config.seed});
    ToyDetector det = ToyDetector::from_json(base.to_json());
    det.set_frozen(false);
    Rng rng = Rng(config.seed).derive("grid/finetune");
    if (!mixed.empty()) train_toy_detector(det, load_samples(mixed), ft, rng);
    GridRow row;
    row.ratio = r;
    row.train_size = mixed.size();
    row.real_count = mixed.size() - synthetic.size();
    row.lamr = summarize(evaluate_detections(run_detector(det, test), test, lo));
    report.rows.push_back(std::move(row));
  }
  return report;
}

json grid_to_json(const GridReport& report) {
  json j;
  j["config_hash"] = report.config_hash;
  j["baseline"] = subsets_to_json(report.baseline);
  j["rows"] = json::array();
  for (const GridRow& r : report.rows)
    j["rows"].push_back({{"ratio", r.ratio},
                         {"train_size", r.train_size},
                         {"real_count", r.real_count},
                         {"lamr", subsets_to_json(r.lamr)}});
  return j;
}

GridReport grid_from_json(const json& j) {
  try {
    GridReport g;
    g.config_hash = j.at("config_hash").get<std::string>();
    g.baseline = subsets_from_json(j.at("baseline"));
    for (const json& r : j.at("rows"))
      g.rows.push_back({r.at("ratio").get<double>(), r.at("train_size").get<std::size_t>(),
                        r.at("real_count").get<std::size_t>(), subsets_from_json(r.at("lamr"))});
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("grid report: ") + e.what());
  }
}

// ---- run directories -------------------------------------------------------

void write_run_config(const fs::path& dir, const RunConfig& config) {
  json j;
  j["config_hash"] = config_hash(config);
  j["config"] = config_to_json(config);
  write_text_atomic(dir / "run_config.json", j.dump(2) + "\n");
}

VerifyResult verify_run(const fs::path& dir) {
  VerifyResult r;
  require(fs::is_directory(dir), ErrorCode::kIo, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  auto note = [&](const fs::path& p, const std::string& hash) {
    ++r.artifacts;
    if (r.config_hash.empty()) r.config_hash = hash;
    else if (hash != r.config_hash)
      r.problems.push_back(fs::relative(p, dir).string() + ": hash " + hash + " differs from " +
                           r.config_hash);
  };
  // run_config.json, when present, defines the reference hash.
  if (fs::exists(dir / "run_config.json")) {
    try {
      r.config_hash = json::parse(read_text(dir / "run_config.json")).at("config_hash").get<std::string>();
    } catch (const std::exception&) {
    }
  }
  for (const fs::path& p : files) {
    const std::string name = p.filename().string();
    const std::string rel = fs::relative(p, dir).string();
    auto ends_with = [&](const std::string& s) {
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".meta.json") || ends_with(".tmp")) continue;
    if (ends_with(".jsonl")) {
      if (!fs::exists(meta_path(p))) {
        r.problems.push_back(rel + ": no hash sidecar");
        continue;
      }
      try {
        note(p, read_meta(p).at("config_hash").get<std::string>());
      } catch (const std::exception&) {
        r.problems.push_back(rel + ": unreadable sidecar");
      }
    } else if (ends_with(".json")) {
      try {
        const json j = json::parse(read_text(p));
        if (!j.is_object() || !j.contains("config_hash") || !j["config_hash"].is_string())
          r.problems.push_back(rel + ": no embedded config hash");
        else
          note(p, j["config_hash"].get<std::string>());
      } catch (const std::exception&) {
        r.problems.push_back(rel + ": unreadable JSON");
      }
    }
  }
  if (r.artifacts == 0) r.problems.push_back("no hashed artifacts found");
  r.ok = r.problems.empty();
  return r;
}

}  // namespace nightaug
