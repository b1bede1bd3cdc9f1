// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tcdnet/metrics.hpp"
#include "tcdnet/trainer.hpp"

namespace tcdnet {

namespace fs = std::filesystem;

/// "25" or "LO:HI" on the 0-255 scale.
std::pair<double, double> parse_sigma_range(std::string_view text);

struct GenOptions {
    fs::path out;
    std::size_t count = 16;
    NoiseMode mode = NoiseMode::awgn;
    double sigma_min = 25.0;
    double sigma_max = 25.0;
    std::uint64_t seed = 0;
    std::size_t height = 64;
    std::size_t width = 64;
};

/// Writes {i}_noisy.ppm, {i}_clean.ppm and manifest.json into `out`.
void cmd_gen(const GenOptions& options);

struct TrainCommand {
    fs::path config;
    std::string stage = "1";  // 1 | 2 | both
    fs::path out;
    std::optional<fs::path> init;  // stage-2 starting point; defaults to OUT/stage1.ckpt
    std::ostream* progress = nullptr;
};

/// Writes config.json, stage{N}.ckpt and stage{N}.log.jsonl into `out`.
void cmd_train(const TrainCommand& command);

struct DenoiseCommand {
    fs::path ckpt;
    fs::path in;
    fs::path out;
    std::optional<std::size_t> tile;
    std::optional<std::size_t> stride;
    std::optional<fs::path> noise_map;
};

void cmd_denoise(const DenoiseCommand& command);

struct EvalCommand {
    fs::path pairs;
    std::optional<fs::path> ckpt;
    fs::path report;
    bool identity = false;  // score the noisy inputs without a model
    bool quantize = false;  // snap estimates to 8 bits before scoring
    std::optional<std::size_t> tile;
    std::optional<std::size_t> stride;
};

/// Writes the JSON-lines report to `report` and the text table next to it (`report` + ".txt").
MetricReport cmd_eval(const EvalCommand& command);

struct AblateCommand {
    fs::path config;
    fs::path out;
    std::vector<int> rows;  // empty = all six
    std::ostream* progress = nullptr;
};

/// Writes config.json, ablation.md and ablation.json into `out`.
AblationResult cmd_ablate(const AblateCommand& command);

/// Maps library errors to process exit codes: 2 config, 3 I/O or format, 4 numeric.
int exit_code_for(const std::exception& e);

}  // namespace tcdnet
