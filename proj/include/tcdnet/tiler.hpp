// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "tcdnet/model.hpp"
#include "tcdnet/tensor.hpp"

namespace tcdnet {

struct TileConfig {
    std::size_t tile = 64;    // P
    std::size_t stride = 48;  // S
    double eps = 1e-8;

    /// Requires 0 < S < P, eps >= 0 and, when patch > 0, P divisible by patch.
    void validate(std::size_t patch = 0) const;
};

struct TileOrigin {
    std::size_t y = 0;
    std::size_t x = 0;
    friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

/// Origins 0, S, 2S, ... along one axis; the last is clamped so the tile ends at the border.
std::vector<std::size_t> plan_axis(std::size_t length, std::size_t tile, std::size_t stride);
/// Row-major product of the per-axis plans.
std::vector<TileOrigin> plan_tiles(std::size_t height, std::size_t width, const TileConfig& cfg);

/// [P,P] map exp(-((i-c)^2 + (j-c)^2) / (2 sigma^2)), sigma = P/4, c = (P-1)/2.
Tensor gaussian_weight_map(std::size_t tile);

struct Tile {
    TileOrigin origin;
    Tensor image;  // [3,P,P]
};

/// sum_k W * tile_k / (sum_k W + eps), accumulated in the given tile order.
Tensor blend(const std::vector<Tile>& tiles, std::size_t height, std::size_t width, const TileConfig& cfg);

using Denoiser = std::function<Tensor(const Tensor&)>;

/// Plans, denoises every tile and blends. Images smaller than P on either side are passed
/// to the denoiser whole.
Tensor tiled_denoise(const Tensor& image, const Denoiser& denoise, const TileConfig& cfg);
Tensor tiled_denoise(const Tensor& image, const Model& model, const TileConfig& cfg);

}  // namespace tcdnet
