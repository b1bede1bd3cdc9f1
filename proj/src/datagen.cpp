// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tcdnet/errors.hpp"
#include "tcdnet/rng.hpp"

namespace tcdnet {

namespace {

constexpr std::size_t kChannels = 3;

void require_image(const char* op, const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != kChannels) {
        throw DimensionError(std::string(op) + ": expected a [3,H,W] image, got " + shape_string(t.shape()));
    }
}

// Recomputes the observation from the stored noise so that y == x + n_gt exactly.
DataSample finish(const Tensor& x, const Tensor& observed, const EnvFactor& env, double sigma) {
    DataSample s;
    s.x = x;
    s.n_gt = Tensor(x.shape());
    s.y = Tensor(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        s.n_gt[i] = observed[i] - x[i];
        s.y[i] = x[i] + s.n_gt[i];
    }
    s.env = env;
    s.sigma = sigma;
    return s;
}

}  // namespace

Tensor gen_content(std::uint64_t seed, std::size_t height, std::size_t width) {
    if (height < 8 || width < 8) throw DimensionError("gen_content: image must be at least 8x8");
    SplitMix64 rng(derive_seed(seed, Stream::content));
    Tensor img({kChannels, height, width});
    const double inv_h = 1.0 / static_cast<double>(height);
    const double inv_w = 1.0 / static_cast<double>(width);

    // Smooth per-channel colour ramp.
    for (std::size_t c = 0; c < kChannels; ++c) {
        const double base = rng.uniform(0.2, 0.8);
        const double du = rng.uniform(-0.4, 0.4);
        const double dv = rng.uniform(-0.4, 0.4);
        for (std::size_t y = 0; y < height; ++y) {
            const double v = (static_cast<double>(y) + 0.5) * inv_h - 0.5;
            for (std::size_t x = 0; x < width; ++x) {
                const double u = (static_cast<double>(x) + 0.5) * inv_w - 0.5;
                img.at(c, y, x) = base + du * u + dv * v;
            }
        }
    }

    // Oriented sinusoidal textures (frequencies in cycles per image side).
    const auto waves = 1 + rng.below(3);
    for (std::uint64_t k = 0; k < waves; ++k) {
        const double amp = rng.uniform(0.05, 0.2);
        const double freq = rng.uniform(1.0, 0.25 * static_cast<double>(std::min(height, width)));
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        std::array<double, 3> tint{};
        for (double& t : tint) t = rng.uniform(0.3, 1.0);
        const double cu = std::cos(theta), sv = std::sin(theta);
        for (std::size_t y = 0; y < height; ++y) {
            const double v = static_cast<double>(y) * inv_h;
            for (std::size_t x = 0; x < width; ++x) {
                const double u = static_cast<double>(x) * inv_w;
                const double s = amp * std::sin(2.0 * std::numbers::pi * freq * (cu * u + sv * v) + phase);
                for (std::size_t c = 0; c < kChannels; ++c) img.at(c, y, x) += tint[c] * s;
            }
        }
    }

    // Flat rectangles with hard edges.
    const auto rects = 2 + rng.below(4);
    for (std::uint64_t k = 0; k < rects; ++k) {
        const auto y0 = static_cast<std::size_t>(rng.below(height));
        const auto x0 = static_cast<std::size_t>(rng.below(width));
        const auto rh = 2 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, height / 2)));
        const auto rw = 2 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(1, width / 2)));
        const double alpha = rng.uniform(0.5, 1.0);
        std::array<double, 3> colour{};
        for (double& col : colour) col = rng.uniform(0.0, 1.0);
        for (std::size_t y = y0; y < std::min(height, y0 + rh); ++y) {
            for (std::size_t x = x0; x < std::min(width, x0 + rw); ++x) {
                for (std::size_t c = 0; c < kChannels; ++c) {
                    img.at(c, y, x) = (1.0 - alpha) * img.at(c, y, x) + alpha * colour[c];
                }
            }
        }
    }

    for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
    return img;
}

EnvFactor sample_env(std::uint64_t seed) {
    SplitMix64 rng(derive_seed(seed, Stream::environment));
    EnvFactor e;
    e.gain = rng.uniform(0.5, 2.0);
    for (double& t : e.tilt) t = rng.uniform(-0.2, 0.2);
    for (double& c : e.cast) c = rng.uniform(-0.1, 0.1);
    return e;
}

Tensor gen_noise(const Tensor& x, const EnvFactor& env, std::uint64_t seed, double sigma_base) {
    require_image("gen_noise", x);
    if (!(sigma_base >= 0.0)) throw ContractError("gen_noise: sigma_base must be >= 0");
    Tensor n(x.shape());
    if (sigma_base == 0.0) return n;
    SplitMix64 rng(derive_seed(seed, Stream::noise));
    const double s = sigma_base / 255.0 * env.gain;
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = s * (0.5 + x[i]) * rng.normal();
    return n;
}

Tensor apply_env(const Tensor& x, const EnvFactor& env) {
    require_image("apply_env", x);
    const std::size_t h = x.dim(1), w = x.dim(2);
    Tensor out(x.shape());
    for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t yy = 0; yy < h; ++yy) {
            const double v = (static_cast<double>(yy) + 0.5) / static_cast<double>(h) - 0.5;
            for (std::size_t xx = 0; xx < w; ++xx) {
                const double u = (static_cast<double>(xx) + 0.5) / static_cast<double>(w) - 0.5;
                out.at(c, yy, xx) = env.gain * x.at(c, yy, xx) + env.tilt[0] * u + env.tilt[1] * v + env.cast[c];
            }
        }
    }
    return out;
}

DataSample compose_observation(const Tensor& x, const EnvFactor& env, const Tensor& noise) {
    require_image("compose_observation", x);
    if (noise.shape() != x.shape()) {
        throw DimensionError("compose_observation: noise " + shape_string(noise.shape()) + " vs image " +
                             shape_string(x.shape()));
    }
    Tensor observed = env.is_neutral() ? x : apply_env(x, env);
    for (std::size_t i = 0; i < observed.size(); ++i) observed[i] += noise[i];
    return finish(x, observed, env, 0.0);
}

DataSample awgn_sample(const Tensor& x, std::uint64_t seed, double sigma) {
    require_image("awgn_sample", x);
    if (!(sigma >= 0.0 && sigma <= 50.0)) {
        throw ContractError("awgn_sample: sigma " + std::to_string(sigma) + " outside [0, 50]");
    }
    SplitMix64 rng(derive_seed(seed, Stream::noise));
    Tensor observed = x;
    if (sigma > 0.0) {
        const double s = sigma / 255.0;
        for (double& v : observed.data()) v += s * rng.normal();
    }
    return finish(x, observed, EnvFactor::neutral(), sigma);
}

DataSample scm_sample(std::uint64_t seed, std::size_t height, std::size_t width, double sigma_base) {
    Tensor x = gen_content(seed, height, width);
    EnvFactor env = sample_env(seed);
    Tensor noise = gen_noise(x, env, seed, sigma_base);
    DataSample s = compose_observation(x, env, noise);
    s.sigma = sigma_base;
    return s;
}

Tensor box_blur3x3(const Tensor& image) {
    require_image("box_blur3x3", image);
    const std::size_t h = image.dim(1), w = image.dim(2);
    Tensor out(image.shape());
    for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                int n = 0;
                for (std::size_t yy = y ? y - 1 : 0; yy <= std::min(h - 1, y + 1); ++yy) {
                    for (std::size_t xx = x ? x - 1 : 0; xx <= std::min(w - 1, x + 1); ++xx) {
                        acc += image.at(c, yy, xx);
                        ++n;
                    }
                }
                out.at(c, y, x) = acc / n;
            }
        }
    }
    return out;
}

Augmentation random_augmentation(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t crop_h,
                                 std::size_t crop_w) {
    if (crop_h > height || crop_w > width || crop_h == 0 || crop_w == 0) {
        throw DimensionError("random_augmentation: crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                             " does not fit " + std::to_string(height) + "x" + std::to_string(width));
    }
    SplitMix64 rng(derive_seed(seed, Stream::augment));
    Augmentation a;
    a.crop_h = crop_h;
    a.crop_w = crop_w;
    a.crop_y = static_cast<std::size_t>(rng.below(height - crop_h + 1));
    a.crop_x = static_cast<std::size_t>(rng.below(width - crop_w + 1));
    a.flip = (rng.next() & 1U) != 0;
    a.rotations = static_cast<unsigned>(rng.below(crop_h == crop_w ? 4 : 1));
    return a;
}

Tensor apply_augmentation(const Tensor& image, const Augmentation& aug) {
    require_image("apply_augmentation", image);
    if (aug.crop_y + aug.crop_h > image.dim(1) || aug.crop_x + aug.crop_w > image.dim(2)) {
        throw DimensionError("apply_augmentation: crop outside image");
    }
    Tensor cur({kChannels, aug.crop_h, aug.crop_w});
    for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t y = 0; y < aug.crop_h; ++y) {
            for (std::size_t x = 0; x < aug.crop_w; ++x) {
                const std::size_t sx = aug.flip ? aug.crop_w - 1 - x : x;
                cur.at(c, y, x) = image.at(c, aug.crop_y + y, aug.crop_x + sx);
            }
        }
    }
    for (unsigned r = 0; r < aug.rotations % 4; ++r) {
        const std::size_t h = cur.dim(1), w = cur.dim(2);
        Tensor rot({kChannels, w, h});
        for (std::size_t c = 0; c < kChannels; ++c) {
            for (std::size_t i = 0; i < w; ++i) {
                for (std::size_t j = 0; j < h; ++j) rot.at(c, i, j) = cur.at(c, j, w - 1 - i);
            }
        }
        cur = std::move(rot);
    }
    return cur;
}

DataSample augment(const DataSample& s, const Augmentation& aug) {
    DataSample out;
    out.y = apply_augmentation(s.y, aug);
    out.x = apply_augmentation(s.x, aug);
    out.n_gt = apply_augmentation(s.n_gt, aug);
    if (s.teacher) out.teacher = apply_augmentation(*s.teacher, aug);
    out.env = s.env;
    out.sigma = s.sigma;
    return out;
}

}  // namespace tcdnet
