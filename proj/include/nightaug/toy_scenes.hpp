// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Procedural street scenes with rectangle pedestrians, rendered under day or
// night illumination, and an edge-based relocalizer for rectangles.

#include <filesystem>
#include <string>

#include "nightaug/core_model.hpp"
#include "nightaug/rng.hpp"

namespace nightaug {

struct ToySceneOptions {
  int size = 64;
  int min_pedestrians = 1;
  int max_pedestrians = 3;
  int min_height = 20;
  int max_height = 44;
  double width_ratio = 0.4;
  // Night rendering: reflectance times a gain drawn from this range, times
  // a bluish tint.
  double night_gain_lo = 0.2;
  double night_gain_hi = 0.3;

  void validate() const;
  /// Defaults with pedestrian heights scaled from the 64 px layout.
  static ToySceneOptions for_size(int size);
};

/// One scene. Pedestrians are integer-aligned, fully inside the image and at
/// least 4 px apart; clutter blocks stay clear of them.
ImageSample make_toy_scene(const std::string& image_id, Domain domain, Rng& rng,
                           const ToySceneOptions& options = {});

struct ToyDatasetSpec {
  int day = 48;
  int night_train = 48;
  int night_test = 32;
  std::uint64_t seed = 1234;
  ToySceneOptions scene;
};

struct ToyDatasetPaths {
  std::filesystem::path day;
  std::filesystem::path night_train;
  std::filesystem::path night_test;
};

/// Writes images/<id>.ppm plus day.jsonl, night_train.jsonl and
/// night_test.jsonl under `out_dir`. Each split has its own seed stream.
ToyDatasetPaths write_toy_dataset(const std::filesystem::path& out_dir, const ToyDatasetSpec& spec);

double mean_intensity(const Tensor& image);

/// Moves each edge of `hint` to the position within +-search px with the
/// largest luminance step summed along that edge, counting only steps whose
/// sign matches the interior's contrast with its surroundings.
BoundingBox relocalize_rectangle(const Tensor& image, const BoundingBox& hint, int search = 6);

}  // namespace nightaug
