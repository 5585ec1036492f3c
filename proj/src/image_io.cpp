// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#include "nightaug/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "nightaug/error.hpp"

namespace nightaug {

namespace {

int read_header_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  require(any, ErrorCode::kParse, "malformed PNM header");
  return value;
}

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open image " + path.string());
  char magic[2];
  in.read(magic, 2);
  require(in.good() && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'),
          ErrorCode::kParse, "unsupported PNM variant in " + path.string());
  const int channels = magic[1] == '6' ? 3 : 1;
  const int width = read_header_int(in);
  const int height = read_header_int(in);
  const int maxval = read_header_int(in);
  require(width > 0 && height > 0 && maxval > 0 && maxval <= 65535, ErrorCode::kParse,
          "bad PNM dimensions in " + path.string());
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(in.gcount() == static_cast<std::streamsize>(raw.size()), ErrorCode::kParse,
          "truncated PNM data in " + path.string());
  Tensor img({height, width, 3});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = channels == 3 ? c : 0;
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * channels + src_c;
        const int v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
        img.at(y, x, c) = static_cast<double>(v) / maxval;
      }
  return img;
}

Tensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_file(&image, path.c_str()) != 0, ErrorCode::kIo,
          "cannot read PNG " + path.string());
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  const bool ok = png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) != 0;
  const std::string message = image.message;
  png_image_free(&image);
  require(ok, ErrorCode::kParse, "PNG decode failed for " + path.string() + ": " + message);
  const int w = static_cast<int>(image.width), h = static_cast<int>(image.height);
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = buffer[i] / 255.0;
  return img;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  return read_pnm(path);
}

void write_ppm16(const std::filesystem::path& path, const Tensor& image) {
  require(image.rank() == 3 && image.dim(2) == 3, ErrorCode::kShapeMismatch,
          "write_ppm16 expects {H, W, 3}, got " + image.shape_string());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write image " + path.string());
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n65535\n";
  std::vector<unsigned char> raw(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    const int q = static_cast<int>(std::lround(v * 65535.0));
    raw[2 * i] = static_cast<unsigned char>(q >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(out.good(), ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace nightaug
