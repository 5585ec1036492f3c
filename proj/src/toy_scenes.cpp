// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/toy_scenes.hpp"

#include <algorithm>
#include <cmath>

#include "nightaug/error.hpp"
#include "nightaug/image_io.hpp"

namespace nightaug {
namespace {

struct Rect {
  int x0, y0, x1, y1;
  bool near(const Rect& o, int gap) const {
    return x0 < o.x1 + gap && o.x0 < x1 + gap && y0 < o.y1 + gap && o.y0 < y1 + gap;
  }
};

double luminance(const Tensor& img, int y, int x) {
  return (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
}

}  // namespace

void ToySceneOptions::validate() const {
  require(size >= 16, ErrorCode::kInvalidArgument, "toy scene size must be >= 16");
  require(min_pedestrians >= 1 && max_pedestrians >= min_pedestrians, ErrorCode::kInvalidArgument,
          "toy scene pedestrian counts must satisfy 1 <= min <= max");
  require(min_height >= 8 && max_height >= min_height && max_height <= size - 2,
          ErrorCode::kInvalidArgument, "toy pedestrian heights must fit the scene");
  require(width_ratio > 0 && width_ratio <= 1, ErrorCode::kInvalidArgument,
          "toy width ratio must be in (0, 1]");
  require(night_gain_lo > 0 && night_gain_hi >= night_gain_lo && night_gain_hi <= 1,
          ErrorCode::kInvalidArgument, "night gain range must lie in (0, 1]");
}

ToySceneOptions ToySceneOptions::for_size(int size) {
  ToySceneOptions o;
  o.size = size;
  o.min_height = static_cast<int>(std::lround(o.min_height * size / 64.0));
  o.max_height = static_cast<int>(std::lround(o.max_height * size / 64.0));
  return o;
}

ImageSample make_toy_scene(const std::string& image_id, Domain domain, Rng& rng,
                           const ToySceneOptions& options) {
  options.validate();
  require(domain != Domain::kSyntheticNight, ErrorCode::kInvalidArgument,
          "toy scenes are rendered as day or night");
  const int n = options.size;
  Tensor refl({n, n, 3});

  const int horizon = rng.uniform_int(n * 3 / 10, n / 2);
  const double sky[3] = {rng.uniform(0.55, 0.65), rng.uniform(0.6, 0.7), rng.uniform(0.68, 0.8)};
  const double ground = rng.uniform(0.42, 0.55);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) {
        const double base = y < horizon ? sky[c] - 0.1 * y / n : ground + 0.05 * (y - horizon) / n;
        refl.at(y, x, c) = base;
      }

  std::vector<Rect> people;
  const int want = rng.uniform_int(options.min_pedestrians, options.max_pedestrians);
  for (int attempt = 0; attempt < 200 && static_cast<int>(people.size()) < want; ++attempt) {
    const int h = rng.uniform_int(options.min_height, options.max_height);
    const int w = std::max(4, static_cast<int>(std::lround(options.width_ratio * h)));
    const int x0 = rng.uniform_int(1, n - w - 1);
    const int y0 = rng.uniform_int(1, n - h - 1);
    const Rect r{x0, y0, x0 + w, y0 + h};
    if (std::any_of(people.begin(), people.end(), [&](const Rect& o) { return r.near(o, 4); }))
      continue;
    people.push_back(r);
  }

  const int clutter = rng.uniform_int(0, 2);
  for (int i = 0, attempt = 0; i < clutter && attempt < 100; ++attempt) {
    const int w = rng.uniform_int(12, 24), h = rng.uniform_int(5, 10);
    const int x0 = rng.uniform_int(0, n - w), y0 = rng.uniform_int(0, n - h);
    const Rect r{x0, y0, x0 + w, y0 + h};
    if (std::any_of(people.begin(), people.end(), [&](const Rect& o) { return r.near(o, 8); }))
      continue;
    const double v = rng.uniform(0.25, 0.85);
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        for (int c = 0; c < 3; ++c) refl.at(y, x, c) = v;
    ++i;
  }

  ImageSample sample;
  sample.image_id = image_id;
  sample.domain = domain;
  for (const Rect& r : people) {
    const bool dark = rng.uniform() < 0.5;
    const double v = dark ? rng.uniform(0.05, 0.18) : rng.uniform(0.88, 1.0);
    double tint[3];
    for (double& t : tint) t = rng.uniform(-0.04, 0.04);
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        for (int c = 0; c < 3; ++c) refl.at(y, x, c) = v + tint[c];
    ObjectAnnotation a;
    a.box = BoundingBox::make(r.x0, r.y0, r.x1, r.y1);
    sample.annotations.push_back(a);
  }

  double gain[3] = {1.0, 1.0, 1.0};
  if (domain == Domain::kNight) {
    const double g = rng.uniform(options.night_gain_lo, options.night_gain_hi);
    gain[0] = 0.85 * g;
    gain[1] = 0.9 * g;
    gain[2] = 1.2 * g;
  } else {
    const double g = rng.uniform(0.92, 1.05);
    for (double& v : gain) v = g;
  }
  sample.pixels = Tensor({n, n, 3});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = refl.at(y, x, c) * gain[c] + rng.normal(0.0, 0.01);
        sample.pixels.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
  return sample;
}

ToyDatasetPaths write_toy_dataset(const std::filesystem::path& out_dir, const ToyDatasetSpec& spec) {
  spec.scene.validate();
  require(spec.day >= 0 && spec.night_train >= 0 && spec.night_test >= 0,
          ErrorCode::kInvalidArgument, "toy dataset counts must be >= 0");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  const Rng root(spec.seed);

  auto write_split = [&](const std::string& name, const std::string& prefix, Domain domain,
                         int count) {
    Rng rng = root.derive("toy/" + name);
    DatasetManifest manifest;
    manifest.set_base_dir(out_dir);
    for (int i = 0; i < count; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s%04d", prefix.c_str(), i);
      const ImageSample s = make_toy_scene(id, domain, rng, spec.scene);
      const std::string rel = "images/" + std::string(id) + ".ppm";
      write_ppm16(out_dir / rel, s.pixels);
      manifest.add(entry_from_sample(s, rel));
    }
    const fs::path path = out_dir / (name + ".jsonl");
    save_manifest(manifest, path);
    return path;
  };

  ToyDatasetPaths paths;
  paths.day = write_split("day", "day_", Domain::kDay, spec.day);
  paths.night_train = write_split("night_train", "night_", Domain::kNight, spec.night_train);
  paths.night_test = write_split("night_test", "nighttest_", Domain::kNight, spec.night_test);
  return paths;
}

double mean_intensity(const Tensor& image) {
  require(image.size() > 0, ErrorCode::kInvalidArgument, "mean intensity of an empty image");
  double s = 0;
  for (std::size_t i = 0; i < image.size(); ++i) s += image[i];
  return s / static_cast<double>(image.size());
}

BoundingBox relocalize_rectangle(const Tensor& image, const BoundingBox& hint, int search) {
  require(image.rank() == 3 && image.dim(2) == 3, ErrorCode::kShapeMismatch,
          "relocalize expects an {H, W, 3} image");
  hint.validate();
  const int h = image.dim(0), w = image.dim(1);
  const int hx0 = static_cast<int>(std::lround(hint.x0)), hx1 = static_cast<int>(std::lround(hint.x1));
  const int hy0 = static_cast<int>(std::lround(hint.y0)), hy1 = static_cast<int>(std::lround(hint.y1));
  const int ry0 = std::clamp(hy0, 0, h - 1), ry1 = std::clamp(hy1, ry0 + 1, h);
  const int rx0 = std::clamp(hx0, 0, w - 1), rx1 = std::clamp(hx1, rx0 + 1, w);

  // Polarity: +1 when the hinted interior is brighter than a 3 px ring around it.
  double inside = 0, ring = 0;
  int n_in = 0, n_ring = 0;
  for (int y = std::max(0, ry0 - 3); y < std::min(h, ry1 + 3); ++y)
    for (int x = std::max(0, rx0 - 3); x < std::min(w, rx1 + 3); ++x) {
      const bool in = y >= ry0 && y < ry1 && x >= rx0 && x < rx1;
      (in ? inside : ring) += luminance(image, y, x);
      ++(in ? n_in : n_ring);
    }
  const double polarity = n_ring == 0 || inside / n_in >= ring / std::max(1, n_ring) ? 1.0 : -1.0;

  // Best boundary between index p - 1 and p, scanning p outward from `centre`;
  // ties go to the nearer position.
  auto best = [&](int centre, int limit, auto step_at) {
    int arg = centre;
    double top = 0.0;
    for (int d = 0; d <= search; ++d) {
      for (int p : {centre - d, centre + d}) {
        if (p < 1 || p > limit - 1) continue;
        const double s = step_at(p);
        if (s > top) {
          top = s;
          arg = p;
        }
      }
    }
    return arg;
  };
  // Signed luminance steps: positive where the interior begins (enter) or ends (leave).
  auto column_step = [&](int x, double dir) {
    double s = 0;
    for (int y = ry0; y < ry1; ++y) s += luminance(image, y, x) - luminance(image, y, x - 1);
    return dir * polarity * s;
  };
  auto row_step = [&](int y, double dir) {
    double s = 0;
    for (int x = rx0; x < rx1; ++x) s += luminance(image, y, x) - luminance(image, y - 1, x);
    return dir * polarity * s;
  };
  auto enter_col = [&](int x) { return column_step(x, 1.0); };
  auto leave_col = [&](int x) { return column_step(x, -1.0); };
  auto enter_row = [&](int y) { return row_step(y, 1.0); };
  auto leave_row = [&](int y) { return row_step(y, -1.0); };
  const int x0 = best(hx0, w, enter_col), x1 = best(hx1, w, leave_col);
  const int y0 = best(hy0, h, enter_row), y1 = best(hy1, h, leave_row);
  if (x0 >= x1 || y0 >= y1) return hint;
  return BoundingBox::make(x0, y0, x1, y1);
}

}  // namespace nightaug
