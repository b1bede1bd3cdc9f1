// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcdnet/errors.hpp"

namespace tcdnet {

void TileConfig::validate(std::size_t patch) const {
    if (stride == 0 || stride >= tile) {
        throw ConfigError("tile stride must satisfy 0 < S < P (got S=" + std::to_string(stride) +
                          ", P=" + std::to_string(tile) + ")");
    }
    if (!(eps >= 0.0)) throw ConfigError("tile eps must be >= 0");
    if (patch > 0 && tile % patch != 0) {
        throw ConfigError("tile size " + std::to_string(tile) + " is not divisible by patch size " +
                          std::to_string(patch));
    }
}

std::vector<std::size_t> plan_axis(std::size_t length, std::size_t tile, std::size_t stride) {
    if (length < tile) {
        throw DimensionError("plan_tiles: extent " + std::to_string(length) + " is smaller than tile " +
                             std::to_string(tile) + "; pad the image or run untiled");
    }
    std::vector<std::size_t> out{0};
    while (out.back() + tile < length) out.push_back(std::min(out.back() + stride, length - tile));
    return out;
}

std::vector<TileOrigin> plan_tiles(std::size_t height, std::size_t width, const TileConfig& cfg) {
    cfg.validate();
    std::vector<TileOrigin> out;
    for (auto y : plan_axis(height, cfg.tile, cfg.stride)) {
        for (auto x : plan_axis(width, cfg.tile, cfg.stride)) out.push_back({y, x});
    }
    return out;
}

Tensor gaussian_weight_map(std::size_t tile) {
    if (tile < 2) throw DimensionError("gaussian_weight_map: tile must be >= 2");
    const double sigma = static_cast<double>(tile) / 4.0;
    const double c = (static_cast<double>(tile) - 1.0) / 2.0;
    std::vector<double> axis(tile);
    for (std::size_t i = 0; i < tile; ++i) {
        const double d = static_cast<double>(i) - c;
        axis[i] = d * d;
    }
    Tensor w({tile, tile});
    for (std::size_t i = 0; i < tile; ++i) {
        for (std::size_t j = 0; j < tile; ++j) w.at(i, j) = std::exp(-(axis[i] + axis[j]) / (2.0 * sigma * sigma));
    }
    return w;
}

Tensor blend(const std::vector<Tile>& tiles, std::size_t height, std::size_t width, const TileConfig& cfg) {
    const std::size_t p = cfg.tile;
    const Tensor w = gaussian_weight_map(p);
    Tensor num({3, height, width});
    Tensor den({height, width});
    std::vector<std::uint8_t> covered(height * width, 0);
    for (const auto& t : tiles) {
        if (t.image.shape() != Shape{3, p, p}) {
            throw DimensionError("blend: tile has shape " + shape_string(t.image.shape()) + ", expected [3," +
                                 std::to_string(p) + "," + std::to_string(p) + "]");
        }
        if (t.origin.y + p > height || t.origin.x + p > width) throw DimensionError("blend: tile outside the image");
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
                const std::size_t y = t.origin.y + i, x = t.origin.x + j;
                const double wij = w.at(i, j);
                den.at(y, x) += wij;
                covered[y * width + x] = 1;
                for (std::size_t c = 0; c < 3; ++c) num.at(c, y, x) += wij * t.image.at(c, i, j);
            }
        }
    }
    for (std::size_t k = 0; k < covered.size(); ++k) {
        if (!covered[k]) {
            throw ContractError("blend: pixel (" + std::to_string(k / width) + ", " + std::to_string(k % width) +
                                ") is not covered by any tile");
        }
    }
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) num.at(c, y, x) /= den.at(y, x) + cfg.eps;
        }
    }
    return num;
}

Tensor tiled_denoise(const Tensor& image, const Denoiser& denoise, const TileConfig& cfg) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("tiled_denoise: expected a [3,H,W] image, got " + shape_string(image.shape()));
    }
    cfg.validate();
    const std::size_t h = image.dim(1), w = image.dim(2), p = cfg.tile;
    if (h < p || w < p) return denoise(image);

    std::vector<Tile> tiles;
    for (const auto& o : plan_tiles(h, w, cfg)) {
        Tensor crop({3, p, p});
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < p; ++i) {
                for (std::size_t j = 0; j < p; ++j) crop.at(c, i, j) = image.at(c, o.y + i, o.x + j);
            }
        }
        Tensor out = denoise(crop);
        if (out.shape() != crop.shape()) throw DimensionError("tiled_denoise: denoiser changed the tile shape");
        tiles.push_back({o, std::move(out)});
    }
    return blend(tiles, h, w, cfg);
}

Tensor tiled_denoise(const Tensor& image, const Model& model, const TileConfig& cfg) {
    cfg.validate(model.config().patch_size);
    return tiled_denoise(image, [&](const Tensor& t) { return model.denoise(t); }, cfg);
}

}  // namespace tcdnet
