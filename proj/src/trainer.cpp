// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "json.hpp"

#include "tcdnet/checkpoint.hpp"
#include "tcdnet/errors.hpp"
#include "tcdnet/ops.hpp"
#include "tcdnet/rng.hpp"

namespace tcdnet {

// ---------------------------------------------------------------------------
// Optimiser

void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimState& state, double lr) {
    if (params.size() != grads.size()) {
        throw ContractError("adamw_step: " + std::to_string(params.size()) + " parameters but " +
                            std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    if (state.m.size() != params.size()) throw ContractError("adamw_step: optimiser state does not match parameters");
    const auto& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (g.size() == 0 && p.size() != 0) throw ContractError("adamw_step: missing gradient for parameter " + std::to_string(k));
        if (g.shape() != p.shape() || state.m[k].shape() != p.shape()) {
            throw ContractError("adamw_step: shape mismatch for parameter " + std::to_string(k));
        }
        auto pd = p.data();
        auto gd = g.data();
        auto md = state.m[k].data();
        auto vd = state.v[k].data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            pd[i] -= lr * c.weight_decay * pd[i];
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gd[i];
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gd[i] * gd[i];
            pd[i] -= lr * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + c.eps);
        }
    }
}

double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min) {
    if (total == 0) return lr_max;
    const double t = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

// ---------------------------------------------------------------------------
// Data

std::string_view to_string(NoiseMode m) { return m == NoiseMode::awgn ? "awgn" : "scm"; }

NoiseMode parse_noise_mode(std::string_view s) {
    if (s == "awgn") return NoiseMode::awgn;
    if (s == "scm") return NoiseMode::scm;
    throw ConfigError("unknown noise mode '" + std::string(s) + "' (expected awgn or scm)");
}

void DataConfig::validate() const {
    if (height < 8 || width < 8) throw ConfigError("data: images must be at least 8x8");
    if (crop == 0 || crop > std::min(height, width)) throw ConfigError("data: crop must be in [1, min(height, width)]");
    if (!(sigma_min >= 0.0 && sigma_min <= sigma_max && sigma_max <= 50.0)) {
        throw ConfigError("data: need 0 <= sigma_min <= sigma_max <= 50");
    }
    if (!(val_sigma >= 0.0 && val_sigma <= 50.0)) throw ConfigError("data: val_sigma must lie in [0, 50]");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("data: val_fraction must lie in (0, 1)");
    if (count < 2) throw ConfigError("data: count must be >= 2 (training and validation)");
    if (repetition == 0) throw ConfigError("data: repetition must be >= 1");
}

std::size_t DataConfig::val_count() const {
    const auto n = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(count)));
    return std::clamp<std::size_t>(n, 1, count - 1);
}

std::uint64_t content_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, Stream::content, index); }

DataSample training_sample(const DataConfig& data, std::uint64_t seed, std::size_t index, std::uint64_t draw_seed,
                           bool with_teacher) {
    if (index >= data.train_count()) throw ContractError("training_sample: index is in the validation split");
    Tensor x = gen_content(content_seed(seed, index), data.height, data.width);
    double sigma = data.sigma_min;
    if (data.sigma_max > data.sigma_min) {
        SplitMix64 rng(derive_seed(draw_seed, Stream::sigma));
        sigma = rng.uniform(data.sigma_min, data.sigma_max);
    }
    DataSample s;
    if (data.mode == NoiseMode::awgn) {
        s = awgn_sample(x, derive_seed(draw_seed, Stream::noise), sigma);
    } else {
        EnvFactor env = sample_env(derive_seed(draw_seed, Stream::environment));
        s = compose_observation(x, env, gen_noise(x, env, derive_seed(draw_seed, Stream::noise), sigma));
        s.sigma = sigma;
    }
    if (with_teacher) s.teacher = box_blur3x3(s.x);
    return s;
}

DataSample validation_sample(const DataConfig& data, std::uint64_t seed, std::size_t v) {
    if (v >= data.val_count()) throw ContractError("validation_sample: index out of range");
    const std::size_t index = data.train_count() + v;
    Tensor x = gen_content(content_seed(seed, index), data.height, data.width);
    const std::uint64_t noise_seed = derive_seed(seed, Stream::validation, v);
    if (data.mode == NoiseMode::awgn) return awgn_sample(x, noise_seed, data.val_sigma);
    EnvFactor env = sample_env(derive_seed(noise_seed, Stream::environment));
    DataSample s = compose_observation(x, env, gen_noise(x, env, noise_seed, data.val_sigma));
    s.sigma = data.val_sigma;
    return s;
}

// ---------------------------------------------------------------------------
// Training

StagePlan StagePlan::stage1() { return {}; }

StagePlan StagePlan::stage2() {
    StagePlan p;
    p.stage = 2;
    p.epochs = 50.0;
    p.lr = 5e-5;
    p.weights = {0.25, 0.05, 0.1};
    p.teacher_enabled = true;
    return p;
}

StagePlan StagePlan::scaled(double factor) const {
    if (!(factor > 0.0)) throw ConfigError("desk-scale factor must be positive");
    StagePlan p = *this;
    p.epochs *= factor;
    return p;
}

void StagePlan::validate() const {
    if (!(epochs > 0.0) && steps == 0) throw ConfigError("train: epochs must be positive");
    if (!(lr >= 0.0) || !(lr_min >= 0.0) || lr_min > lr) throw ConfigError("train: need 0 <= lr_min <= lr");
    if (batch == 0) throw ConfigError("train: batch must be >= 1");
    if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be >= 0");
    if (!(adamw.weight_decay >= 0.0) || !(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) ||
        !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0) || !(adamw.eps > 0.0)) {
        throw ConfigError("train: invalid AdamW hyper-parameters");
    }
    weights.validate();
}

std::size_t StagePlan::total_steps(const DataConfig& data) const {
    if (steps > 0) return steps;
    const double draws = epochs * static_cast<double>(data.train_count() * data.repetition);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(draws / static_cast<double>(batch))));
}

std::string StepLog::to_json() const {
    return nlohmann::ordered_json{{"step", step},       {"lr", lr},           {"l_rec", rec},    {"l_noise", noise},
                          {"l_ortho", ortho},   {"l_teacher", teacher}, {"total", total}}
        .dump();
}

namespace {

struct SampleResult {
    std::vector<Tensor> grads;
    double rec = 0.0, noise = 0.0, ortho = 0.0, teacher = 0.0, total = 0.0;
};

// Draw order: shuffled passes over the training split, reshuffled every epoch.
class DrawSchedule {
public:
    DrawSchedule(const DataConfig& data, std::uint64_t seed) : data_(data), seed_(seed) {}

    std::size_t index_of(std::uint64_t draw) {
        const std::size_t per_epoch = data_.train_count() * data_.repetition;
        const std::uint64_t epoch = draw / per_epoch;
        if (epoch != epoch_ || order_.empty()) {
            epoch_ = epoch;
            order_.resize(per_epoch);
            for (std::size_t i = 0; i < per_epoch; ++i) order_[i] = i % data_.train_count();
            SplitMix64 rng(derive_seed(seed_, Stream::batch, epoch));
            for (std::size_t i = per_epoch; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
        }
        return order_[draw % per_epoch];
    }

private:
    const DataConfig& data_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::vector<std::size_t> order_;
};

SampleResult run_sample(const ModelConfig& config, const ModelParams& params, const DataSample& sample,
                        const LossWeights& weights, const FeatureExtractor& phi, const std::vector<const Tensor*>& order) {
    Graph g;
    OutputVars out = forward(g, g.constant(sample.y), params, config);
    LossBreakdown b = total_loss(out, sample, weights, phi);
    g.backward(b.total);
    SampleResult r;
    r.rec = b.rec;
    r.noise = b.noise;
    r.ortho = b.ortho;
    r.teacher = b.teacher;
    r.total = b.total.value().item();
    r.grads.reserve(order.size());
    for (const Tensor* p : order) r.grads.push_back(g.is_bound(*p) ? g.grad_of(*p) : Tensor::zeros(p->shape()));
    return r;
}

}  // namespace

std::vector<StepLog> train_stage(const ModelConfig& config, ModelParams& params, const DataConfig& data,
                                 const StagePlan& plan, std::uint64_t seed, const TrainOptions& options) {
    config.validate();
    data.validate();
    plan.validate();
    if (data.crop % config.patch_size != 0) {
        throw ConfigError("data: crop " + std::to_string(data.crop) + " is not divisible by patch size " +
                          std::to_string(config.patch_size));
    }
    const bool teacher = plan.teacher_enabled && plan.weights.teacher > 0.0;
    const std::size_t total = plan.total_steps(data);
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, plan.batch));
    const FeatureExtractor phi(options.extractor_seed);
    // Each stage draws from its own slice of the stream so stage 2 does not replay stage 1.
    const std::uint64_t stage_seed = derive_seed(seed, Stream::batch, 1000 + static_cast<std::uint64_t>(plan.stage));

    std::vector<Tensor*> tensors;
    std::vector<std::string> names;
    params.for_each([&](const std::string& name, Tensor& t) {
        tensors.push_back(&t);
        names.push_back(name);
    });
    const std::vector<const Tensor*> order(tensors.begin(), tensors.end());

    OptimState state;
    state.config = plan.adamw;
    DrawSchedule schedule(data, stage_seed);
    std::vector<StepLog> log;
    log.reserve(total);

    for (std::size_t step = 0; step < total; ++step) {
        const double lr = cosine_lr(step, total, plan.lr, plan.lr_min);
        std::vector<DataSample> batch(plan.batch);
        for (std::size_t b = 0; b < plan.batch; ++b) {
            const std::uint64_t draw = static_cast<std::uint64_t>(step) * plan.batch + b;
            const std::uint64_t draw_seed = derive_seed(stage_seed, Stream::noise, draw);
            DataSample s = training_sample(data, seed, schedule.index_of(draw), draw_seed, teacher);
            batch[b] = augment(s, random_augmentation(derive_seed(draw_seed, Stream::augment), data.height, data.width,
                                                      data.crop, data.crop));
        }

        std::vector<SampleResult> results(plan.batch);
        auto work = [&](std::size_t first) {
            for (std::size_t b = first; b < plan.batch; b += threads) {
                results[b] = run_sample(config, params, batch[b], plan.weights, phi, order);
            }
        };
        try {
            if (threads == 1) {
                work(0);
            } else {
                std::vector<std::exception_ptr> errors(threads);
                std::vector<std::thread> pool;
                for (std::size_t t = 0; t < threads; ++t) {
                    pool.emplace_back([&, t] {
                        try {
                            work(t);
                        } catch (...) {
                            errors[t] = std::current_exception();
                        }
                    });
                }
                for (auto& th : pool) th.join();
                for (auto& e : errors) {
                    if (e) std::rethrow_exception(e);
                }
            }
        } catch (const NumericError& e) {
            throw NumericError("training stage " + std::to_string(plan.stage) + " step " + std::to_string(step) +
                               ": " + e.what());
        }

        // Fixed-order reduction: batch mean of per-sample gradients.
        const double inv = 1.0 / static_cast<double>(plan.batch);
        std::vector<Tensor> grads;
        grads.reserve(tensors.size());
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            Tensor g = std::move(results[0].grads[k]);
            for (std::size_t b = 1; b < plan.batch; ++b) {
                auto src = results[b].grads[k].data();
                auto dst = g.data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
            for (double& v : g.data()) v *= inv;
            grads.push_back(std::move(g));
        }
        double norm2 = 0.0;
        for (std::size_t k = 0; k < grads.size(); ++k) {
            for (double v : grads[k].data()) norm2 += v * v;
            if (!grads[k].all_finite()) {
                throw NumericError("training stage " + std::to_string(plan.stage) + " step " + std::to_string(step) +
                                   ": non-finite gradient in " + names[k]);
            }
        }
        const double norm = std::sqrt(norm2);
        if (plan.clip_norm > 0.0 && norm > plan.clip_norm) {
            const double s = plan.clip_norm / norm;
            for (auto& g : grads) {
                for (double& v : g.data()) v *= s;
            }
        }
        adamw_step(tensors, grads, state, lr);

        StepLog entry;
        entry.step = step;
        entry.lr = lr;
        for (const auto& r : results) {
            entry.rec += r.rec * inv;
            entry.noise += r.noise * inv;
            entry.ortho += r.ortho * inv;
            entry.teacher += r.teacher * inv;
            entry.total += r.total * inv;
        }
        if (!std::isfinite(entry.total)) {
            throw NumericError("training stage " + std::to_string(plan.stage) + " step " + std::to_string(step) +
                               ": non-finite loss");
        }
        if (options.log) *options.log << entry.to_json() << '\n';
        if (options.on_step) options.on_step(entry);
        log.push_back(entry);
    }
    round_to_checkpoint_precision(params);
    return log;
}

MetricReport validate_model(const Model& model, const DataConfig& data, std::uint64_t seed,
                            const MetricOptions& options) {
    MetricReport r;
    for (std::size_t v = 0; v < data.val_count(); ++v) {
        const DataSample s = validation_sample(data, seed, v);
        r.images.push_back(measure("val_" + std::to_string(v), model.denoise(s.y), s.x, options));
    }
    return r;
}

MetricReport noisy_baseline(const DataConfig& data, std::uint64_t seed, const MetricOptions& options) {
    MetricReport r;
    for (std::size_t v = 0; v < data.val_count(); ++v) {
        const DataSample s = validation_sample(data, seed, v);
        r.images.push_back(measure("val_" + std::to_string(v), s.y, s.x, options));
    }
    return r;
}

double mean_ortho(const Model& model, const DataConfig& data, std::uint64_t seed) {
    double total = 0.0;
    for (std::size_t v = 0; v < data.val_count(); ++v) {
        const ModelOutput out = model.run(validation_sample(data, seed, v).y);
        Graph g(false);
        total += loss_ortho(g.constant(out.z_c), g.constant(out.z_n)).value().item();
    }
    return total / static_cast<double>(data.val_count());
}

std::size_t threads_from_env() {
    const char* env = std::getenv("TCDNET_THREADS");
    if (env == nullptr) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<std::size_t>(v);
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationConfig> AblationConfig::table_rows() {
    using P = PosEncoding;
    using E = EbaTopology;
    return {
        {1, false, false, P::ape, E::none, false},     {2, true, false, P::ape, E::none, false},
        {3, true, true, P::hybrid, E::none, false},    {4, true, true, P::hybrid, E::parallel, false},
        {5, true, true, P::hybrid, E::serial, false},  {6, true, true, P::hybrid, E::serial, true},
    };
}

ModelConfig AblationConfig::model_config(const ModelConfig& base) const {
    ModelConfig c = base;
    c.pos_encoding = pos_encoding;
    c.eba_topology = eba;
    return c;
}

LossWeights AblationConfig::loss_weights(const LossWeights& base) const {
    LossWeights w;
    w.noise = dual_stream ? base.noise : 0.0;
    w.ortho = ortho ? base.ortho : 0.0;
    w.teacher = teacher ? (base.teacher > 0.0 ? base.teacher : 0.1) : 0.0;
    return w;
}

std::string AblationResult::to_markdown() const {
    auto mark = [](bool b) { return b ? "yes" : "no"; };
    auto pos = [](PosEncoding p) { return p == PosEncoding::ape ? "APE" : "CPE"; };
    auto eba = [](EbaTopology e) {
        return e == EbaTopology::none ? "none" : e == EbaTopology::serial ? "serial" : "parallel";
    };
    std::string out = "| ID | Dual-stream + L_noise | L_ortho | Pos. enc. | EBA | L_teacher | PSNR (dB) | SSIM |\n";
    out += "|---|---|---|---|---|---|---|---|\n";
    char buf[64];
    for (const auto& r : rows) {
        const auto& c = r.config;
        std::snprintf(buf, sizeof buf, "%.4f | %.6f", r.psnr_db, r.ssim);
        out += "| " + std::to_string(c.id) + " | " + mark(c.dual_stream) + " | " + mark(c.ortho) + " | " +
               pos(c.pos_encoding) + " | " + eba(c.eba) + " | " + mark(c.teacher) + " | " + buf + " |\n";
    }
    std::snprintf(buf, sizeof buf, "%.4f", noisy_psnr_db);
    out += "\nNoisy input PSNR: " + std::string(buf) + " dB\n";
    return out;
}

AblationResult run_ablation(const std::vector<AblationConfig>& rows, const ModelConfig& base, const DataConfig& data,
                            const StagePlan& plan, std::uint64_t seed, const TrainOptions& options) {
    AblationResult result;
    result.noisy_psnr_db = noisy_baseline(data, seed).mean_psnr();
    for (const auto& row : rows) {
        const ModelConfig config = row.model_config(base);
        StagePlan p = plan;
        p.weights = row.loss_weights(plan.weights);
        p.teacher_enabled = row.teacher;
        ModelParams params = init_params(config, seed);
        train_stage(config, params, data, p, seed, options);
        const MetricReport report = validate_model(Model(config, std::move(params)), data, seed);
        result.rows.push_back({row, report.mean_psnr(), report.mean_ssim()});
    }
    return result;
}

}  // namespace tcdnet
