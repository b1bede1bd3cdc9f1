// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tcdnet {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Purpose tags for stream splitting. Values are part of the reproducibility contract.
enum class Stream : std::uint64_t {
    content = 1,
    environment = 2,
    noise = 3,
    init = 4,
    augment = 5,
    batch = 6,
    sigma = 7,
    extractor = 8,
    validation = 9,
};

/// Sub-seed for (root seed, purpose, index): mix64(mix64(seed + tag * golden) ^ (index * c)).
constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept {
    const std::uint64_t a = mix64(seed + static_cast<std::uint64_t>(stream) * 0x9E3779B97F4A7C15ULL);
    return mix64(a ^ (index * 0xD1B54A32D192ED03ULL));
}

/// SplitMix64 generator with explicitly specified derived distributions so that
/// other implementations can reproduce the streams bit for bit.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    /// Top 53 bits scaled to [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// next() mod n; n > 0.
    std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

    /// Box-Muller pair; the cosine branch is returned first, the sine branch cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tcdnet
