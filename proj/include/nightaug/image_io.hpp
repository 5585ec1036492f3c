// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "nightaug/tensor.hpp"

namespace nightaug {

/// Reads a binary PGM/PPM (8 or 16 bit) or PNG into {H, W, 3} in [0, 1].
/// Grayscale inputs are replicated to three channels.
Tensor read_image(const std::filesystem::path& path);

/// Writes a 16-bit binary PPM. Values are clamped to [0, 1].
void write_ppm16(const std::filesystem::path& path, const Tensor& image);

}  // namespace nightaug
