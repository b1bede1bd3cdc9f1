// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "tcdnet/tensor.hpp"

namespace tcdnet {

/// Nuisance factors of image formation: exposure gain, an illumination ramp and a colour cast.
struct EnvFactor {
    double gain = 1.0;
    std::array<double, 2> tilt{0.0, 0.0};  // (gx, gy) per unit of normalised image width/height
    std::array<double, 3> cast{0.0, 0.0, 0.0};

    static EnvFactor neutral() { return {}; }
    bool is_neutral() const { return gain == 1.0 && tilt == std::array<double, 2>{} && cast == std::array<double, 3>{}; }

    friend bool operator==(const EnvFactor&, const EnvFactor&) = default;
};

/// One training/evaluation example. Invariant: y == x + n_gt elementwise, bit for bit.
struct DataSample {
    Tensor y;      // observation [3,H,W]
    Tensor x;      // clean target [3,H,W], environment-free
    Tensor n_gt;   // y - x
    EnvFactor env;
    std::optional<Tensor> teacher;
    double sigma = 0.0;  // 0-255 scale
};

/// Procedural clean image in [0,1]: smooth colour gradients, oriented sinusoidal
/// textures and random rectangles with hard edges.
Tensor gen_content(std::uint64_t seed, std::size_t height, std::size_t width);

/// gain ~ U[0.5, 2], tilt ~ U[-0.2, 0.2]^2, cast ~ U[-0.1, 0.1]^3.
EnvFactor sample_env(std::uint64_t seed);

/// Heteroscedastic Gaussian noise with std (sigma_base/255) * gain * (0.5 + x).
Tensor gen_noise(const Tensor& x, const EnvFactor& env, std::uint64_t seed, double sigma_base);

/// gain * x + tilt plane + cast, per channel. The tilt plane is gx * u + gy * v with
/// u, v in [-0.5, 0.5] spanning the image width/height.
Tensor apply_env(const Tensor& x, const EnvFactor& env);

/// y = apply_env(x) + noise; n_gt = y - x.
DataSample compose_observation(const Tensor& x, const EnvFactor& env, const Tensor& noise);

/// Blind-AWGN example: i.i.d. N(0, (sigma/255)^2) added to x. sigma must lie in [0, 50].
DataSample awgn_sample(const Tensor& x, std::uint64_t seed, double sigma);

/// Full causal-model draw: content, environment and signal-dependent noise from one seed.
DataSample scm_sample(std::uint64_t seed, std::size_t height, std::size_t width, double sigma_base);

/// 3x3 mean filter averaging in-bounds neighbours only. Default teacher image source.
Tensor box_blur3x3(const Tensor& image);

/// Spatial augmentation applied identically to every image of a sample.
struct Augmentation {
    std::size_t crop_y = 0, crop_x = 0, crop_h = 0, crop_w = 0;
    bool flip = false;         // horizontal, applied after cropping
    unsigned rotations = 0;    // counter-clockwise quarter turns, applied last
};

Augmentation random_augmentation(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t crop_h,
                                 std::size_t crop_w);
Tensor apply_augmentation(const Tensor& image, const Augmentation& aug);
/// Applies the same transform to y, x, n_gt and teacher, keeping y == x + n_gt.
DataSample augment(const DataSample& sample, const Augmentation& aug);

}  // namespace tcdnet
