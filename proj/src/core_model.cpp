// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "nightaug/error.hpp"
#include "nightaug/image_io.hpp"

namespace nightaug {

using ojson = nlohmann::ordered_json;

namespace {

constexpr double kBoundsSlack = 1e-9;

std::string box_string(const BoundingBox& b) {
  std::ostringstream os;
  os << '(' << b.x0 << ',' << b.y0 << ',' << b.x1 << ',' << b.y1 << ')';
  return os.str();
}

}  // namespace

BoundingBox BoundingBox::make(double x0, double y0, double x1, double y1) {
  BoundingBox b{x0, y0, x1, y1};
  b.validate();
  return b;
}

void BoundingBox::validate() const {
  const bool finite = std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1);
  require(finite && x0 < x1 && y0 < y1, ErrorCode::kInvalidGeometry,
          "degenerate or non-finite box " + box_string(*this));
}

void Detection::validate() const {
  box.validate();
  require(std::isfinite(score), ErrorCode::kInvalidArgument,
          "detection on " + image_id + " has a non-finite score");
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  a.validate();
  b.validate();
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

bool rectangles_intersect(const BoundingBox& a, const BoundingBox& b) {
  a.validate();
  b.validate();
  return std::min(a.x1, b.x1) > std::max(a.x0, b.x0) && std::min(a.y1, b.y1) > std::max(a.y0, b.y0);
}

void ObjectAnnotation::validate() const {
  require(!label.empty(), ErrorCode::kInvalidArgument, "annotation label is empty");
  box.validate();
  require(occlusion >= 0.0 && occlusion <= 1.0, ErrorCode::kInvalidArgument,
          "occlusion fraction outside [0,1]");
}

AnnotationSet rescale_annotations(const AnnotationSet& annotations, double sx, double sy) {
  require(sx > 0 && sy > 0 && std::isfinite(sx) && std::isfinite(sy), ErrorCode::kInvalidArgument,
          "annotation scale factors must be positive");
  AnnotationSet out = annotations;
  for (auto& a : out) {
    a.box = {a.box.x0 * sx, a.box.y0 * sy, a.box.x1 * sx, a.box.y1 * sy};
    a.validate();
  }
  return out;
}

std::string to_string(Domain domain) {
  switch (domain) {
    case Domain::kDay: return "day";
    case Domain::kNight: return "night";
    case Domain::kSyntheticNight: return "synthetic_night";
  }
  return "day";
}

Domain parse_domain(std::string_view text) {
  if (text == "day") return Domain::kDay;
  if (text == "night") return Domain::kNight;
  if (text == "synthetic_night") return Domain::kSyntheticNight;
  fail(ErrorCode::kParse, "unknown domain '" + std::string(text) + "'");
}

namespace {

void check_within(const AnnotationSet& annotations, int width, int height, const std::string& id) {
  for (const auto& a : annotations) {
    a.validate();
    require(a.box.x0 >= -kBoundsSlack && a.box.y0 >= -kBoundsSlack &&
                a.box.x1 <= width + kBoundsSlack && a.box.y1 <= height + kBoundsSlack,
            ErrorCode::kInvalidGeometry,
            "box " + box_string(a.box) + " of " + id + " lies outside the image");
  }
}

}  // namespace

void ImageSample::validate() const {
  require(!image_id.empty(), ErrorCode::kInvalidArgument, "image_id is empty");
  require(pixels.rank() == 3, ErrorCode::kShapeMismatch, "pixels must be {H, W, C}");
  check_within(annotations, width(), height(), image_id);
  require(domain != Domain::kSyntheticNight || source_image_id.has_value(),
          ErrorCode::kContractViolation, "synthetic sample " + image_id + " lacks source_image_id");
}

std::string synthetic_id_for(std::string_view source_id) {
  return std::string(source_id) + "__night";
}

ImageSample inherit_annotations(const ImageSample& source, Tensor translated_pixels,
                                std::optional<AnnotationScale> declared_scale,
                                std::string synthetic_id) {
  require(translated_pixels.rank() == 3, ErrorCode::kShapeMismatch,
          "translated pixels must be {H, W, C}");
  ImageSample out;
  out.image_id = synthetic_id.empty() ? synthetic_id_for(source.image_id) : std::move(synthetic_id);
  out.domain = Domain::kSyntheticNight;
  out.source_image_id = source.image_id;
  const bool same_size = translated_pixels.dim(0) == source.height() &&
                         translated_pixels.dim(1) == source.width();
  if (declared_scale) {
    out.annotations = rescale_annotations(source.annotations, declared_scale->sx, declared_scale->sy);
  } else {
    require(same_size, ErrorCode::kShapeMismatch,
            "translated image " + translated_pixels.shape_string() + " differs from source " +
                source.pixels.shape_string() + " and no scale was declared");
    out.annotations = source.annotations;
  }
  out.pixels = std::move(translated_pixels);
  out.validate();
  return out;
}

void ManifestEntry::validate() const {
  require(!image_id.empty(), ErrorCode::kInvalidArgument, "manifest entry without image_id");
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument,
          "manifest entry " + image_id + " has non-positive size");
  check_within(objects, width, height, image_id);
  require(domain != Domain::kSyntheticNight || source_image_id.has_value(),
          ErrorCode::kContractViolation, "synthetic entry " + image_id + " lacks source_image_id");
}

void DatasetManifest::add(ManifestEntry entry) {
  entry.validate();
  require(index_.find(entry.image_id) == index_.end(), ErrorCode::kInvalidArgument,
          "duplicate image_id '" + entry.image_id + "' in manifest");
  index_.emplace(entry.image_id, entries_.size());
  entries_.push_back(std::move(entry));
}

const ManifestEntry* DatasetManifest::find(std::string_view image_id) const {
  auto it = index_.find(image_id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::map<Domain, std::size_t> DatasetManifest::domain_counts() const {
  std::map<Domain, std::size_t> counts;
  for (const auto& e : entries_) ++counts[e.domain];
  return counts;
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.image_path);
  if (p.is_relative() && !base_dir_.empty()) return base_dir_ / p;
  return p;
}

namespace {

ojson entry_to_json(const ManifestEntry& e) {
  ojson j;
  j["image_id"] = e.image_id;
  j["image_path"] = e.image_path;
  j["width"] = e.width;
  j["height"] = e.height;
  j["domain"] = to_string(e.domain);
  if (e.source_image_id) j["source_image_id"] = *e.source_image_id;
  ojson objects = ojson::array();
  for (const auto& a : e.objects) {
    ojson o;
    o["label"] = a.label;
    o["x0"] = a.box.x0;
    o["y0"] = a.box.y0;
    o["x1"] = a.box.x1;
    o["y1"] = a.box.y1;
    o["occlusion"] = a.occlusion;
    o["ignore"] = a.ignore;
    objects.push_back(std::move(o));
  }
  j["objects"] = std::move(objects);
  return j;
}

ManifestEntry entry_from_json(const ojson& j) {
  ManifestEntry e;
  e.image_id = j.at("image_id").get<std::string>();
  e.image_path = j.at("image_path").get<std::string>();
  e.width = j.at("width").get<int>();
  e.height = j.at("height").get<int>();
  e.domain = parse_domain(j.at("domain").get<std::string>());
  if (j.contains("source_image_id")) e.source_image_id = j.at("source_image_id").get<std::string>();
  for (const auto& o : j.at("objects")) {
    ObjectAnnotation a;
    a.label = o.at("label").get<std::string>();
    a.box = {o.at("x0").get<double>(), o.at("y0").get<double>(), o.at("x1").get<double>(),
             o.at("y1").get<double>()};
    a.occlusion = o.at("occlusion").get<double>();
    a.ignore = o.at("ignore").get<bool>();
    e.objects.push_back(std::move(a));
  }
  return e;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries()) {
    out += entry_to_json(e).dump();
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      m.add(entry_from_json(ojson::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::kParse, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m = parse_manifest(read_text(path));
  m.set_base_dir(path.parent_path());
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << serialize_manifest(manifest);
  require(out.good(), ErrorCode::kIo, "short write to " + path.string());
}

ManifestEntry entry_from_sample(const ImageSample& sample, std::string image_path) {
  ManifestEntry e;
  e.image_id = sample.image_id;
  e.image_path = std::move(image_path);
  e.width = sample.width();
  e.height = sample.height();
  e.domain = sample.domain;
  e.source_image_id = sample.source_image_id;
  e.objects = sample.annotations;
  return e;
}

ImageSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry) {
  ImageSample s;
  s.image_id = entry.image_id;
  s.pixels = read_image(manifest.resolve(entry));
  require(s.width() == entry.width && s.height() == entry.height, ErrorCode::kShapeMismatch,
          "image " + entry.image_id + " is " + s.pixels.shape_string() +
              " but the manifest declares " + std::to_string(entry.width) + "x" +
              std::to_string(entry.height));
  s.domain = entry.domain;
  s.annotations = entry.objects;
  s.source_image_id = entry.source_image_id;
  s.validate();
  return s;
}

ManifestEntry ecp_entry_from_json(std::string_view json_text, std::string image_id,
                                  std::string image_path, Domain domain) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::kParse, "ECP annotation " + image_id + ": " + ex.what());
  }
  ManifestEntry e;
  e.image_id = std::move(image_id);
  e.image_path = std::move(image_path);
  e.width = doc.at("imagewidth").get<int>();
  e.height = doc.at("imageheight").get<int>();
  e.domain = domain;
  for (const auto& child : doc.value("children", nlohmann::json::array())) {
    const std::string identity = child.value("identity", "");
    ObjectAnnotation a;
    if (identity == "pedestrian") {
      a.label = "pedestrian";
    } else if (identity == "rider") {
      a.label = "rider";
      a.ignore = true;
    } else if (identity == "person-group-far-away" || identity == "rider+vehicle-group-far-away") {
      a.label = "person-group";
      a.ignore = true;
    } else {
      continue;
    }
    const double x0 = std::clamp(child.at("x0").get<double>(), 0.0, static_cast<double>(e.width));
    const double y0 = std::clamp(child.at("y0").get<double>(), 0.0, static_cast<double>(e.height));
    const double x1 = std::clamp(child.at("x1").get<double>(), 0.0, static_cast<double>(e.width));
    const double y1 = std::clamp(child.at("y1").get<double>(), 0.0, static_cast<double>(e.height));
    if (!(x0 < x1 && y0 < y1)) continue;
    a.box = {x0, y0, x1, y1};
    for (const auto& tag : child.value("tags", nlohmann::json::array())) {
      const std::string t = tag.get<std::string>();
      if (t == "occluded>10") a.occlusion = std::max(a.occlusion, 0.25);
      if (t == "occluded>40") a.occlusion = std::max(a.occlusion, 0.5);
      if (t == "occluded>80") a.occlusion = std::max(a.occlusion, 0.9);
    }
    e.objects.push_back(std::move(a));
  }
  e.validate();
  return e;
}

DatasetManifest ingest_ecp(const std::filesystem::path& label_root,
                           const std::filesystem::path& image_root, Domain domain) {
  namespace fs = std::filesystem;
  require(fs::is_directory(label_root), ErrorCode::kIo,
          "ECP label directory not found: " + label_root.string());
  std::vector<fs::path> files;
  for (const auto& it : fs::recursive_directory_iterator(label_root))
    if (it.is_regular_file() && it.path().extension() == ".json") files.push_back(it.path());
  std::sort(files.begin(), files.end());
  DatasetManifest m;
  for (const auto& f : files) {
    fs::path rel = fs::relative(f, label_root);
    rel.replace_extension(".png");
    const fs::path img = image_root.empty() ? rel : image_root / rel;
    m.add(ecp_entry_from_json(read_text(f), f.stem().string(), img.string(), domain));
  }
  return m;
}

}  // namespace nightaug
