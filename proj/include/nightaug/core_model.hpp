// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Shared domain types: boxes, annotations, images, and dataset manifests.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nightaug/tensor.hpp"

namespace nightaug {

/// Corner-encoded box in continuous pixel coordinates, origin top-left.
struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  /// Throws kInvalidGeometry unless finite with x0 < x1 and y0 < y1.
  static BoundingBox make(double x0, double y0, double x1, double y1);
  void validate() const;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Intersection over union. Symmetric, in [0, 1], 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

/// True iff the open interiors overlap; shared edges do not count.
bool rectangles_intersect(const BoundingBox& a, const BoundingBox& b);

struct ObjectAnnotation {
  std::string label = "pedestrian";
  BoundingBox box;
  double occlusion = 0.0;  // fraction in [0, 1]
  bool ignore = false;

  void validate() const;
  friend bool operator==(const ObjectAnnotation&, const ObjectAnnotation&) = default;
};

using AnnotationSet = std::vector<ObjectAnnotation>;

inline constexpr std::string_view kPedestrianLabel = "pedestrian";

/// Scales x coordinates by sx and y coordinates by sy.
AnnotationSet rescale_annotations(const AnnotationSet& annotations, double sx, double sy);

/// A scored predicted box on one image.
struct Detection {
  std::string image_id;
  BoundingBox box;
  double score = 0.0;

  void validate() const;
  friend bool operator==(const Detection&, const Detection&) = default;
};

using DetectionSet = std::vector<Detection>;

enum class Domain { kDay, kNight, kSyntheticNight };

std::string to_string(Domain domain);
Domain parse_domain(std::string_view text);

/// An image with its labels. Pixels are {height, width, channels} in [0, 1].
struct ImageSample {
  std::string image_id;
  Tensor pixels;
  Domain domain = Domain::kDay;
  AnnotationSet annotations;
  std::optional<std::string> source_image_id;

  int height() const { return pixels.dim(0); }
  int width() const { return pixels.dim(1); }
  int channels() const { return pixels.dim(2); }

  void validate() const;
};

struct AnnotationScale {
  double sx = 1.0;
  double sy = 1.0;
};

/// Wraps translated pixels as a synthetic-night sample that carries a copy of
/// the source labels. When the translated size differs from the source, a
/// declared scale must be supplied and the labels are rescaled by it.
ImageSample inherit_annotations(const ImageSample& source, Tensor translated_pixels,
                                std::optional<AnnotationScale> declared_scale = std::nullopt,
                                std::string synthetic_id = {});

/// Id given to the translation of a day image.
std::string synthetic_id_for(std::string_view source_id);

/// One manifest record: image metadata plus a path; pixels load lazily.
struct ManifestEntry {
  std::string image_id;
  std::string image_path;
  int width = 0;
  int height = 0;
  Domain domain = Domain::kDay;
  std::optional<std::string> source_image_id;
  AnnotationSet objects;

  void validate() const;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class DatasetManifest {
 public:
  DatasetManifest() = default;

  /// Appends an entry; image ids must be unique.
  void add(ManifestEntry entry);

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ManifestEntry* find(std::string_view image_id) const;
  std::map<Domain, std::size_t> domain_counts() const;

  /// Directory that relative image paths resolve against.
  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  std::filesystem::path resolve(const ManifestEntry& entry) const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<ManifestEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::filesystem::path base_dir_;
};

// Line-delimited JSON, one entry per line, fields in a fixed order.
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

ManifestEntry entry_from_sample(const ImageSample& sample, std::string image_path);
ImageSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry);

/// Converts one ECP ground-truth JSON document to a manifest entry. Tags map
/// to occlusion fractions: none 0, "occluded>10" 0.25, "occluded>40" 0.5,
/// "occluded>80" 0.9. Riders and person groups become ignore regions; other
/// identities are dropped. Boxes are clipped to the image.
ManifestEntry ecp_entry_from_json(std::string_view json_text, std::string image_id,
                                  std::string image_path, Domain domain);

/// Walks an ECP label tree (<root>/<city>/<name>.json) in sorted order.
DatasetManifest ingest_ecp(const std::filesystem::path& label_root,
                           const std::filesystem::path& image_root, Domain domain);

}  // namespace nightaug
