// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tcdnet/model.hpp"
#include "tcdnet/tiler.hpp"
#include "tcdnet/trainer.hpp"

namespace tcdnet {

/// JSON run configuration:
///
///   { "seed": u64,
///     "model": { "preset": "tiny"|"large", ...ModelConfig fields },
///     "data":  { ...DataConfig fields, "mode": "awgn"|"scm" },
///     "train": { "scale": f, "faithful": b, "stage1": {...}, "stage2": {...} },
///     "tiler": { "tile", "stride", "eps" } }
///
/// Every field is optional. Unknown keys are a ConfigError.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string preset = "tiny";
    ModelConfig model = ModelConfig::tiny();
    DataConfig data;
    double scale = 0.1;          // multiplies stage epochs
    bool faithful = false;  // disables gradient clipping
    StagePlan stage1 = StagePlan::stage1();
    StagePlan stage2 = StagePlan::stage2();
    TileConfig tiler;

    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    /// Effective configuration, every field spelled out. parse(dump()) == *this.
    std::string dump() const;
    void validate() const;

    /// Stage 1 or 2 with scale and faithful applied.
    StagePlan plan(int stage) const;
};

}  // namespace tcdnet
