// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tcdnet/tensor.hpp"

namespace tcdnet {

/// round(v * 255) clamped to [0, 255].
std::uint8_t to_byte(double v);

/// Snaps every value to the nearest 8-bit level, returned on the [0,1] scale.
Tensor quantize8(const Tensor& image);

/// Binary PPM (P6, maxval 255) from a [3,H,W] image in [0,1].
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
/// Parses P6 data with maxval 255; header comments are accepted. Returns [3,H,W] in [0,1].
Tensor decode_ppm(std::span<const std::uint8_t> bytes);

void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace tcdnet
