// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

#include "tcdnet/datagen.hpp"
#include "tcdnet/graph.hpp"
#include "tcdnet/model.hpp"

namespace tcdnet {

struct LossWeights {
    double noise = 0.0;
    double ortho = 0.0;
    double teacher = 0.0;

    void validate() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline constexpr double kCharbonnierEps = 1e-3;
inline constexpr double kOrthoDelta = 1e-8;

/// Frozen convolutional feature map used for the teacher alignment term:
/// three stages of {3x3 conv, GELU, 2x2 average pool} with 8/16/32 channels.
/// Weights are drawn once from the seed and never updated; any other frozen
/// network with the same interface can replace it.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed = 0x7ea7c0de);

    /// x [3,H,W] with H, W >= 8 -> [32, H/8, W/8]. Gradients reach x, never the weights.
    Var extract(Var image) const;
    Tensor extract(const Tensor& image) const;

    static constexpr std::array<std::size_t, 3> kWidths{8, 16, 32};

private:
    std::array<Tensor, 3> weights_;
    std::array<Tensor, 3> biases_;
};

/// mean over all elements of sqrt((x_hat - x)^2 + eps^2).
Var loss_rec(Var x_hat, Var x, double eps = kCharbonnierEps);
/// Charbonnier mean of n_hat - (y - x).
Var loss_noise(Var n_hat, Var y, Var x, double eps = kCharbonnierEps);
/// Mean over token rows of |cos(z_c, z_n)|, each norm floored at delta.
Var loss_ortho(Var z_c, Var z_n, double delta = kOrthoDelta);
/// Mean absolute difference of feature maps; the teacher branch is a constant.
Var loss_teacher(Var x_hat, const Tensor& teacher, const FeatureExtractor& phi);

struct LossBreakdown {
    Var total;
    double rec = 0.0;
    double noise = 0.0;
    double ortho = 0.0;
    double teacher = 0.0;
};

/// rec + w.noise * noise + w.ortho * ortho + w.teacher * teacher. Terms with zero weight
/// are still reported; the teacher term is exactly 0 when the sample has no teacher image.
LossBreakdown total_loss(const OutputVars& out, const DataSample& sample, const LossWeights& weights,
                         const FeatureExtractor& phi, double eps = kCharbonnierEps);

}  // namespace tcdnet
