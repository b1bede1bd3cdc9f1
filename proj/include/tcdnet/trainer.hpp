// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tcdnet/datagen.hpp"
#include "tcdnet/metrics.hpp"
#include "tcdnet/model.hpp"
#include "tcdnet/objectives.hpp"

namespace tcdnet {

// ---------------------------------------------------------------------------
// Optimiser

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

struct OptimState {
    AdamWConfig config;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments
    std::uint64_t step = 0;
};

/// p <- p - lr * wd * p, then the bias-corrected Adam update. Moments are created on the
/// first call. An empty gradient tensor is a ContractError.
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimState& state, double lr);

/// lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi * step / total)).
double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min = 0.0);

// ---------------------------------------------------------------------------
// Data

enum class NoiseMode : std::uint8_t { awgn, scm };
std::string_view to_string(NoiseMode m);
NoiseMode parse_noise_mode(std::string_view s);

/// Procedural dataset: `count` content seeds, the last `val_fraction` of them held out.
/// Every training draw gets fresh noise, environment and augmentation from its draw index.
struct DataConfig {
    NoiseMode mode = NoiseMode::awgn;
    std::size_t count = 64;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t crop = 32;
    double sigma_min = 25.0;  // training noise level range (0-255 scale)
    double sigma_max = 25.0;
    double val_sigma = 25.0;
    double val_fraction = 0.1;
    std::size_t repetition = 1;  // passes over the training split per epoch

    void validate() const;
    std::size_t val_count() const;
    std::size_t train_count() const { return count - val_count(); }
};

/// Content seed of dataset index i.
std::uint64_t content_seed(std::uint64_t seed, std::size_t index);
/// Un-augmented training example for dataset index `index`; noise level, noise and environment
/// come from `draw_seed`.
DataSample training_sample(const DataConfig& data, std::uint64_t seed, std::size_t index, std::uint64_t draw_seed,
                           bool with_teacher);
/// Held-out example v (0 <= v < val_count) with fixed noise at val_sigma.
DataSample validation_sample(const DataConfig& data, std::uint64_t seed, std::size_t v);

// ---------------------------------------------------------------------------
// Training

struct StagePlan {
    int stage = 1;
    double epochs = 100.0;
    double lr = 2e-4;
    double lr_min = 0.0;
    std::size_t batch = 32;
    LossWeights weights{0.5, 0.1, 0.0};
    bool teacher_enabled = false;
    double clip_norm = 1.0;       // global-norm clipping, 0 disables
    std::size_t steps = 0;        // when > 0, overrides the epoch-derived step count
    AdamWConfig adamw;

    static StagePlan stage1();
    static StagePlan stage2();
    /// Epoch counts multiplied by `factor` (the desk-scale knob).
    StagePlan scaled(double factor) const;
    void validate() const;
    std::size_t total_steps(const DataConfig& data) const;
};

struct StepLog {
    std::size_t step = 0;
    double lr = 0.0;
    double rec = 0.0;
    double noise = 0.0;
    double ortho = 0.0;
    double teacher = 0.0;
    double total = 0.0;

    std::string to_json() const;
};

struct TrainOptions {
    std::ostream* log = nullptr;  // JSON lines
    std::size_t threads = 1;      // per-sample workers; results are independent of this value
    std::uint64_t extractor_seed = 0x7ea7c0de;
    std::function<void(const StepLog&)> on_step;
};

/// Runs one stage in place on `params`. Parameters are rounded to checkpoint precision at the
/// end, so the returned state equals what a checkpoint written afterwards reloads.
std::vector<StepLog> train_stage(const ModelConfig& config, ModelParams& params, const DataConfig& data,
                                 const StagePlan& plan, std::uint64_t seed, const TrainOptions& options = {});

/// Denoises every validation image and reports PSNR/SSIM against the clean target.
MetricReport validate_model(const Model& model, const DataConfig& data, std::uint64_t seed,
                            const MetricOptions& options = {});
/// Same images, scoring the noisy input itself.
MetricReport noisy_baseline(const DataConfig& data, std::uint64_t seed, const MetricOptions& options = {});

/// Mean loss_ortho of the model over the validation inputs.
double mean_ortho(const Model& model, const DataConfig& data, std::uint64_t seed);

/// TCDNET_THREADS, clamped to >= 1; 1 when unset or malformed.
std::size_t threads_from_env();

// ---------------------------------------------------------------------------
// Ablation

struct AblationConfig {
    int id = 1;
    bool dual_stream = false;  // noise branch supervised by loss_noise
    bool ortho = false;
    PosEncoding pos_encoding = PosEncoding::ape;
    EbaTopology eba = EbaTopology::none;
    bool teacher = false;

    /// The six fixed rows, in order.
    static std::vector<AblationConfig> table_rows();
    ModelConfig model_config(const ModelConfig& base) const;
    LossWeights loss_weights(const LossWeights& base) const;
};

struct AblationRow {
    AblationConfig config;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    double noisy_psnr_db = 0.0;

    std::string to_markdown() const;
};

/// Trains every row from the same seed, data and plan, then validates.
AblationResult run_ablation(const std::vector<AblationConfig>& rows, const ModelConfig& base, const DataConfig& data,
                            const StagePlan& plan, std::uint64_t seed, const TrainOptions& options = {});

}  // namespace tcdnet
