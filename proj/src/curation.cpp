// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/curation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nightaug/error.hpp"
#include "nightaug/lora.hpp"
#include "nightaug/optim.hpp"

namespace nightaug {

using ojson = nlohmann::ordered_json;

double fidelity_from_features(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b) && a.rank() == 2, ErrorCode::kShapeMismatch,
          "fidelity: feature grids differ: " + a.shape_string() + " vs " + b.shape_string());
  const int n = a.dim(0), c = a.dim(1);
  auto centred = [n, c](const Tensor& t) {
    Tensor out = t;
    for (int j = 0; j < c; ++j) {
      double m = 0.0;
      for (int i = 0; i < n; ++i) m += t.at(i, j);
      m /= n;
      for (int i = 0; i < n; ++i) out.at(i, j) -= m;
    }
    return out;
  };
  const Tensor ca = centred(a), cb = centred(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    dot += ca[i] * cb[i];
    na += ca[i] * ca[i];
    nb += cb[i] * cb[i];
  }
  constexpr double kFlat = 1e-20;
  if (na <= kFlat && nb <= kFlat) return 1.0;
  if (na <= kFlat || nb <= kFlat) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

FidelityScore fidelity_score(const SemanticEncoder& encoder, const ImageSample& source,
                             const ImageSample& translated, int layer) {
  if (layer < 0) layer = default_layers(encoder.num_layers()).back();
  auto features = [&](const ImageSample& s) {
    try {
      return extract_stack(encoder, ad::constant(s.pixels), {layer}).features[0].value();
    } catch (const Error& e) {
      fail(e.code(), "encoder failed on image " + s.image_id + ": " + e.what());
    }
  };
  return {source.image_id, translated.image_id,
          fidelity_from_features(features(source), features(translated))};
}

double f1_at(const std::vector<CalibrationPair>& pairs, double threshold) {
  int tp = 0, fp = 0, fn = 0;
  for (const CalibrationPair& p : pairs) {
    const bool kept = p.score >= threshold;
    const bool accepted = p.label == HumanLabel::kAccepted;
    if (kept && accepted) ++tp;
    if (kept && !accepted) ++fp;
    if (!kept && accepted) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

double calibrate_threshold(const std::vector<CalibrationPair>& pairs) {
  bool has_acc = false, has_rej = false;
  std::vector<double> scores;
  for (const CalibrationPair& p : pairs) {
    require(std::isfinite(p.score), ErrorCode::kInvalidArgument, "calibration score not finite");
    (p.label == HumanLabel::kAccepted ? has_acc : has_rej) = true;
    scores.push_back(p.score);
  }
  require(has_acc && has_rej, ErrorCode::kInvalidArgument,
          "calibration set must contain both accepted and rejected pairs");
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> candidates{scores.front()};
  for (std::size_t i = 1; i < scores.size(); ++i)
    candidates.push_back(0.5 * (scores[i - 1] + scores[i]));
  candidates.push_back(std::nextafter(scores.back(), std::numeric_limits<double>::infinity()));
  double best_t = candidates.front(), best_f1 = -1.0;
  for (double t : candidates) {
    const double f = f1_at(pairs, t);
    if (f >= best_f1) {
      best_f1 = f;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

std::string label_name(HumanLabel l) { return l == HumanLabel::kAccepted ? "accepted" : "rejected"; }

HumanLabel parse_label(const std::string& s) {
  if (s == "accepted") return HumanLabel::kAccepted;
  if (s == "rejected") return HumanLabel::kRejected;
  fail(ErrorCode::kParse, "unknown calibration label '" + s + "'");
}

template <typename F>
void for_each_line(std::string_view text, const char* what, F&& fn) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      fn(ojson::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<CalibrationPair> parse_calibration(std::string_view text) {
  std::vector<CalibrationPair> out;
  for_each_line(text, "calibration", [&out](const ojson& j) {
    out.push_back({j.at("image_id").get<std::string>(), j.at("score").get<double>(),
                   parse_label(j.at("label").get<std::string>())});
  });
  return out;
}

std::string serialize_calibration(const std::vector<CalibrationPair>& pairs) {
  std::string out;
  for (const CalibrationPair& p : pairs) {
    ojson j;
    j["image_id"] = p.image_id;
    j["score"] = p.score;
    j["label"] = label_name(p.label);
    out += j.dump() + "\n";
  }
  return out;
}

Stage1Partition stage1_gate(const std::vector<FidelityScore>& scores, double threshold) {
  Stage1Partition p;
  for (const FidelityScore& s : scores) (s.score >= threshold ? p.kept : p.discarded).push_back(s);
  return p;
}

NegativeCrops mine_negative_crops(const ImageSample& sample, int crop_w, int crop_h, int count,
                                  Rng& rng, int max_attempts) {
  require(crop_w > 0 && crop_h > 0 && crop_w < sample.width() && crop_h < sample.height(),
          ErrorCode::kInvalidArgument, "negative crop must be smaller than the image");
  require(count >= 0 && max_attempts >= 0, ErrorCode::kInvalidArgument, "negative crop count < 0");
  NegativeCrops out;
  int attempts = 0;
  while (static_cast<int>(out.crops.size()) < count) {
    if (attempts >= max_attempts) {
      out.budget_exhausted = true;
      break;
    }
    ++attempts;
    const int x = rng.uniform_int(0, sample.width() - crop_w);
    const int y = rng.uniform_int(0, sample.height() - crop_h);
    const BoundingBox crop{static_cast<double>(x), static_cast<double>(y),
                           static_cast<double>(x + crop_w), static_cast<double>(y + crop_h)};
    bool clear = true;
    for (const ObjectAnnotation& a : sample.annotations)
      if (rectangles_intersect(crop, a.box)) {
        clear = false;
        break;
      }
    if (clear) out.crops.push_back(crop);
  }
  return out;
}

Tensor extract_crop(const Tensor& image, const BoundingBox& box, int size) {
  box.validate();
  require(image.rank() == 3 && size > 0, ErrorCode::kShapeMismatch, "extract_crop: bad input");
  const int H = image.dim(0), W = image.dim(1), C = image.dim(2);
  Tensor out({size, size, C});
  for (int oy = 0; oy < size; ++oy)
    for (int ox = 0; ox < size; ++ox) {
      // Pixel centres in image coordinates, sampled bilinearly with edge
      // replication.
      const double sx = box.x0 + (ox + 0.5) * box.width() / size - 0.5;
      const double sy = box.y0 + (oy + 0.5) * box.height() / size - 0.5;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      auto px = [&](int y, int x, int c) {
        return image.at(std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1), c);
      };
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      for (int c = 0; c < C; ++c)
        out.at(oy, ox, c) = (1 - ay) * ((1 - ax) * px(y0, x0, c) + ax * px(y0, x0 + 1, c)) +
                            ay * ((1 - ax) * px(y0 + 1, x0, c) + ax * px(y0 + 1, x0 + 1, c));
    }
  return out;
}

namespace {

Tensor contrast_normalise(const Tensor& crop) {
  const double m = crop.mean();
  double var = 0.0;
  for (double v : crop.values()) var += (v - m) * (v - m);
  var /= static_cast<double>(crop.size());
  const double s = std::sqrt(var) + 0.02;
  Tensor out = crop;
  for (double& v : out.values()) v = (v - m) / s;
  return out;
}

ad::Var he_init(Rng& rng, int rows, int cols) {
  Tensor t({rows, cols});
  const double sd = std::sqrt(2.0 / cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
  return ad::parameter(std::move(t));
}

}  // namespace

ToyPatchClassifier::ToyPatchClassifier(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("toy-patch-classifier");
  params_ = {he_init(rng, 8, 27),   ad::parameter(Tensor({8})),  he_init(rng, 16, 72),
             ad::parameter(Tensor({16})), he_init(rng, 1, 256), ad::parameter(Tensor({1}))};
}

ad::Var ToyPatchClassifier::logit(const Tensor& crop) const {
  require(crop.rank() == 3 && crop.dim(0) == kSize && crop.dim(1) == kSize && crop.dim(2) == 3,
          ErrorCode::kShapeMismatch, "patch classifier expects a 16x16x3 crop");
  require(crop.all_finite(), ErrorCode::kNonFinite, "patch classifier got non-finite pixels");
  ad::Var h = ad::silu(ad::conv2d(ad::constant(contrast_normalise(crop)), params_[0], params_[1], 3, 2, 1));
  h = ad::silu(ad::conv2d(h, params_[2], params_[3], 3, 2, 1));
  const ad::Var flat = ad::reshape(h, {1, 256});
  return ad::reshape(ad::add(ad::matmul_nt(flat, params_[4]), ad::reshape(params_[5], {1, 1})), {1});
}

double ToyPatchClassifier::pedestrian_probability(const Tensor& crop) const {
  return 1.0 / (1.0 + std::exp(-logit(crop).item()));
}

ojson ToyPatchClassifier::to_json() const {
  ojson j;
  j["format"] = "nightaug-toy-patch-classifier-v1";
  j["params"] = ojson::array();
  for (const ad::Var& p : params_) j["params"].push_back(tensor_to_json(p.value()));
  return j;
}

ToyPatchClassifier ToyPatchClassifier::from_json(const ojson& j) {
  ToyPatchClassifier c;
  const auto& ps = j.at("params");
  require(ps.size() == c.params_.size(), ErrorCode::kParse, "patch classifier: wrong parameter count");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor t = tensor_from_json(ps[i]);
    require(t.same_shape(c.params_[i].value()), ErrorCode::kParse,
            "patch classifier: parameter shape mismatch");
    c.params_[i].mutable_value() = std::move(t);
  }
  return c;
}

void train_patch_classifier(ToyPatchClassifier& classifier, const std::vector<ImageSample>& samples,
                            const ClassifierTrainOptions& options, Rng& rng) {
  struct Example {
    std::size_t sample;
    BoundingBox box;
    double label;
  };
  std::vector<Example> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageSample& s = samples[i];
    for (const ObjectAnnotation& a : s.annotations)
      if (!a.ignore && a.label == kPedestrianLabel) pos.push_back({i, a.box, 1.0});
    for (int k = 0; k < options.negatives_per_image; ++k) {
      const int h = rng.uniform_int(16, std::min(44, s.height() - 2));
      const int w = std::max(6, static_cast<int>(std::lround(0.4 * h)));
      const NegativeCrops c = mine_negative_crops(s, w, h, 1, rng);
      for (const BoundingBox& b : c.crops) neg.push_back({i, b, 0.0});
    }
  }
  require(!pos.empty() && !neg.empty(), ErrorCode::kInvalidArgument,
          "classifier training needs both pedestrian and background crops");
  AdamOptions ao;
  ao.learning_rate = options.learning_rate;
  ao.weight_decay = 0.0;
  Adam opt(classifier.parameters(), ao);
  for (int step = 0; step < options.steps; ++step) {
    const std::vector<Example>& pool = (step % 2 == 0) ? pos : neg;
    const Example& ex = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
    const ImageSample& s = samples[ex.sample];
    BoundingBox b = ex.box;
    const double jx = rng.uniform(-0.1, 0.1) * b.width(), jy = rng.uniform(-0.05, 0.05) * b.height();
    b = BoundingBox{b.x0 + jx, b.y0 + jy, b.x1 + jx, b.y1 + jy};
    Tensor crop = extract_crop(s.pixels, b, ToyPatchClassifier::kSize);
    const double gain = rng.uniform(0.15, 1.2), noise = rng.uniform(0.0, 0.03);
    for (double& v : crop.values()) v = std::clamp(v * gain + rng.normal(0.0, noise), 0.0, 1.0);
    const ad::Var l = classifier.logit(crop);
    const ad::Var t = ad::constant(Tensor::scalar(ex.label));
    const ad::Var loss = ad::neg(ad::add(ad::mul(t, ad::log_sigmoid(l)),
                                         ad::mul(ad::add_scalar(ad::neg(t), 1.0), ad::log_sigmoid(ad::neg(l)))));
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }
}

Stage2Result stage2_gate(const PatchClassifier& classifier, const ImageSample& translated) {
  Stage2Result r;
  try {
    for (const ObjectAnnotation& a : translated.annotations) {
      if (a.ignore || a.label != kPedestrianLabel) continue;
      const Tensor crop = extract_crop(translated.pixels, a.box, classifier.input_size());
      const double p = classifier.pedestrian_probability(crop);
      require(std::isfinite(p) && p >= 0.0 && p <= 1.0, ErrorCode::kContractViolation,
              "classifier returned an invalid probability");
      const bool ped = p >= 0.5;
      r.verdicts.push_back({a.box, ped, ped ? p : 1.0 - p});
      if (!ped) r.outcome = Stage2Outcome::kDiscarded;
    }
  } catch (const std::exception& e) {
    r.outcome = Stage2Outcome::kQuarantined;
    r.error = e.what();
  }
  return r;
}

int CurationReport::stage2_evaluations() const {
  int n = 0;
  for (const CurationRecord& r : records) n += r.stage1_pass ? 1 : 0;
  return n;
}

CurationResult curate(const std::vector<ImageSample>& pool, const std::vector<ImageSample>& sources,
                      const SemanticEncoder& encoder, const PatchClassifier& classifier,
                      double threshold) {
  std::map<std::string, const ImageSample*> by_id;
  for (const ImageSample& s : sources) by_id[s.image_id] = &s;
  std::set<std::string> seen;
  CurationResult out;
  for (const ImageSample& s : pool) {
    require(seen.insert(s.image_id).second, ErrorCode::kInvalidArgument,
            "duplicate pool image " + s.image_id);
    require(s.source_image_id.has_value(), ErrorCode::kInvalidArgument,
            "pool image " + s.image_id + " has no source image id");
    auto it = by_id.find(*s.source_image_id);
    require(it != by_id.end(), ErrorCode::kInvalidArgument,
            "source " + *s.source_image_id + " of " + s.image_id + " not found");
    CurationRecord rec;
    rec.image_id = s.image_id;
    rec.stage1_score = fidelity_score(encoder, *it->second, s).score;
    rec.stage1_pass = rec.stage1_score >= threshold;
    if (!rec.stage1_pass) {
      rec.final_status = FinalStatus::kRejected;
      rec.reason = "stage1_below_threshold";
    } else {
      const Stage2Result s2 = stage2_gate(classifier, s);
      rec.stage2_verdicts = s2.verdicts;
      switch (s2.outcome) {
        case Stage2Outcome::kKept:
          rec.final_status = FinalStatus::kKept;
          out.kept.push_back(s);
          break;
        case Stage2Outcome::kDiscarded:
          rec.final_status = FinalStatus::kRejected;
          rec.reason = "stage2_background_patch";
          break;
        case Stage2Outcome::kQuarantined:
          rec.final_status = FinalStatus::kQuarantined;
          rec.reason = "classifier_error: " + s2.error;
          break;
      }
    }
    out.report.records.push_back(std::move(rec));
  }
  return out;
}

DatasetManifest curate_manifest(const DatasetManifest& pool, const DatasetManifest& sources,
                                const SemanticEncoder& encoder, const PatchClassifier& classifier,
                                double threshold, CurationReport* report) {
  std::vector<ImageSample> pool_samples, source_samples;
  std::set<std::string> needed;
  for (const ManifestEntry& e : pool.entries()) {
    pool_samples.push_back(load_sample(pool, e));
    if (e.source_image_id) needed.insert(*e.source_image_id);
  }
  for (const ManifestEntry& e : sources.entries())
    if (needed.count(e.image_id)) source_samples.push_back(load_sample(sources, e));
  const CurationResult r = curate(pool_samples, source_samples, encoder, classifier, threshold);
  DatasetManifest out;
  out.set_base_dir(pool.base_dir());
  std::set<std::string> kept;
  for (const ImageSample& s : r.kept) kept.insert(s.image_id);
  for (const ManifestEntry& e : pool.entries())
    if (kept.count(e.image_id)) out.add(e);
  if (report) *report = r.report;
  return out;
}

std::string to_string(FinalStatus status) {
  switch (status) {
    case FinalStatus::kKept: return "kept";
    case FinalStatus::kRejected: return "rejected";
    case FinalStatus::kQuarantined: return "quarantined";
  }
  return "rejected";
}

namespace {

FinalStatus parse_status(const std::string& s) {
  if (s == "kept") return FinalStatus::kKept;
  if (s == "rejected") return FinalStatus::kRejected;
  if (s == "quarantined") return FinalStatus::kQuarantined;
  fail(ErrorCode::kParse, "unknown curation status '" + s + "'");
}

}  // namespace

std::string serialize_curation_report(const CurationReport& report) {
  std::string out;
  for (const CurationRecord& r : report.records) {
    ojson j;
    j["image_id"] = r.image_id;
    j["stage1_score"] = r.stage1_score;
    j["stage1_pass"] = r.stage1_pass;
    j["stage2_verdicts"] = ojson::array();
    for (const PatchVerdict& v : r.stage2_verdicts)
      j["stage2_verdicts"].push_back({{"x0", v.box.x0},
                                      {"y0", v.box.y0},
                                      {"x1", v.box.x1},
                                      {"y1", v.box.y1},
                                      {"class", v.pedestrian ? "pedestrian" : "background"},
                                      {"confidence", v.confidence}});
    j["final_status"] = to_string(r.final_status);
    j["reason"] = r.reason;
    out += j.dump() + "\n";
  }
  return out;
}

CurationReport parse_curation_report(std::string_view text) {
  CurationReport report;
  for_each_line(text, "curation report", [&report](const ojson& j) {
    CurationRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.stage1_score = j.at("stage1_score").get<double>();
    r.stage1_pass = j.at("stage1_pass").get<bool>();
    for (const auto& v : j.at("stage2_verdicts")) {
      const std::string cls = v.at("class").get<std::string>();
      require(cls == "pedestrian" || cls == "background", ErrorCode::kParse,
              "unknown verdict class '" + cls + "'");
      r.stage2_verdicts.push_back({BoundingBox::make(v.at("x0").get<double>(), v.at("y0").get<double>(),
                                                     v.at("x1").get<double>(), v.at("y1").get<double>()),
                                   cls == "pedestrian", v.at("confidence").get<double>()});
    }
    r.final_status = parse_status(j.at("final_status").get<std::string>());
    r.reason = j.at("reason").get<std::string>();
    report.records.push_back(std::move(r));
  });
  return report;
}

}  // namespace nightaug
