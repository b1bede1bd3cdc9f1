// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "tcdnet/checkpoint.hpp"
#include "tcdnet/datagen.hpp"
#include "tcdnet/errors.hpp"
#include "tcdnet/image_io.hpp"
#include "tcdnet/rng.hpp"
#include "tcdnet/run_config.hpp"
#include "tcdnet/tiler.hpp"

namespace tcdnet {

namespace {

using Json = nlohmann::ordered_json;

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("not a number: '" + std::string(s) + "'");
    return v;
}

TileConfig tile_config(std::optional<std::size_t> tile, std::optional<std::size_t> stride) {
    if (!tile && stride) throw ConfigError("--stride requires --tile");
    TileConfig cfg;
    cfg.tile = *tile;
    cfg.stride = stride ? *stride : std::max<std::size_t>(1, *tile * 3 / 4);
    return cfg;
}

void check_untiled(const Tensor& image, const ModelConfig& config, const fs::path& path) {
    const std::size_t p = config.patch_size;
    if (image.dim(1) % p != 0 || image.dim(2) % p != 0) {
        throw DimensionError(path.string() + " is " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(1)) +
                             ", not a multiple of the patch size " + std::to_string(p) +
                             "; pass --tile P --stride S or crop the image");
    }
}

// Shift and scale so that zero maps to mid-grey and the largest magnitude to 0 or 1.
Tensor noise_visualisation(const Tensor& n) {
    double peak = 0.0;
    for (double v : n.data()) peak = std::max(peak, std::abs(v));
    Tensor out = n;
    for (double& v : out.data()) v = peak > 0.0 ? 0.5 + 0.5 * v / peak : 0.5;
    return out;
}

std::function<void(const StepLog&)> progress_printer(std::ostream* out, std::string label, std::size_t total) {
    if (!out) return {};
    return [out, label = std::move(label), total](const StepLog& s) {
        if (s.step % 100 == 0 || s.step + 1 == total) {
            *out << label << " step " << s.step + 1 << "/" << total << "  total " << s.total << "  l_rec " << s.rec
                 << "  l_ortho " << s.ortho << '\n';
        }
    };
}

Json env_json(const EnvFactor& e) {
    return Json{{"gain", e.gain}, {"tilt", e.tilt}, {"cast", e.cast}};
}

}  // namespace

std::pair<double, double> parse_sigma_range(std::string_view text) {
    const auto colon = text.find(':');
    double lo = 0.0, hi = 0.0;
    if (colon == std::string_view::npos) {
        lo = hi = parse_double(text);
    } else {
        lo = parse_double(text.substr(0, colon));
        hi = parse_double(text.substr(colon + 1));
    }
    if (!(lo >= 0.0 && lo <= hi && hi <= 50.0)) {
        throw ConfigError("sigma range '" + std::string(text) + "' must satisfy 0 <= LO <= HI <= 50");
    }
    return {lo, hi};
}

// ---------------------------------------------------------------------------

void cmd_gen(const GenOptions& o) {
    if (!(o.sigma_min >= 0.0 && o.sigma_min <= o.sigma_max && o.sigma_max <= 50.0)) {
        throw ConfigError("gen: need 0 <= sigma_min <= sigma_max <= 50");
    }
    if (o.height < 8 || o.width < 8) throw ConfigError("gen: images must be at least 8x8");
    make_dir(o.out);
    Json samples = Json::array();
    for (std::size_t i = 0; i < o.count; ++i) {
        const std::uint64_t cs = content_seed(o.seed, i);
        const std::uint64_t ns = derive_seed(o.seed, Stream::noise, i);
        double sigma = o.sigma_min;
        if (o.sigma_max > o.sigma_min) sigma = SplitMix64(derive_seed(o.seed, Stream::sigma, i)).uniform(o.sigma_min, o.sigma_max);
        const Tensor x = gen_content(cs, o.height, o.width);
        DataSample s;
        Json entry{{"index", i}};
        if (o.mode == NoiseMode::awgn) {
            s = awgn_sample(x, ns, sigma);
        } else {
            const std::uint64_t es = derive_seed(o.seed, Stream::environment, i);
            const EnvFactor env = sample_env(es);
            s = compose_observation(x, env, gen_noise(x, env, ns, sigma));
            entry["environment_seed"] = es;
        }
        const std::string stem = std::to_string(i);
        entry["noisy"] = stem + "_noisy.ppm";
        entry["clean"] = stem + "_clean.ppm";
        entry["content_seed"] = cs;
        entry["noise_seed"] = ns;
        entry["sigma"] = sigma;
        entry["env"] = env_json(s.env);
        write_ppm(o.out / (stem + "_noisy.ppm"), s.y);
        write_ppm(o.out / (stem + "_clean.ppm"), s.x);
        samples.push_back(std::move(entry));
    }
    Json manifest{{"seed", o.seed},         {"mode", to_string(o.mode)}, {"sigma", {o.sigma_min, o.sigma_max}},
                  {"height", o.height},     {"width", o.width},          {"count", o.count},
                  {"samples", std::move(samples)}};
    write_text(o.out / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

void cmd_train(const TrainCommand& c) {
    const RunConfig rc = RunConfig::load(c.config);
    std::vector<int> stages;
    if (c.stage == "1") stages = {1};
    else if (c.stage == "2") stages = {2};
    else if (c.stage == "both") stages = {1, 2};
    else throw ConfigError("--stage must be 1, 2 or both (got '" + c.stage + "')");

    // Resolve the stage-2 starting point before doing any work.
    std::optional<fs::path> init = c.init;
    if (stages.front() == 2) {
        if (!init) init = c.out / "stage1.ckpt";
        if (!fs::exists(*init)) {
            throw IoError("stage 2 needs a stage-1 checkpoint, but " + init->string() +
                          " does not exist (run --stage 1 first or pass --init)");
        }
    }

    make_dir(c.out);
    write_text(c.out / "config.json", rc.dump());

    TrainOptions options;
    options.threads = threads_from_env();
    ModelParams params;
    for (int stage : stages) {
        if (stage == 1) {
            params = init_params(rc.model, rc.seed);
        } else if (init && stages.front() == 2) {
            Model m = load_checkpoint(*init);
            if (!(m.config() == rc.model)) {
                throw ConfigError("checkpoint " + init->string() + " was trained with a different model config");
            }
            params = std::move(m.params());
        }
        const StagePlan plan = rc.plan(stage);
        const std::string tag = "stage" + std::to_string(stage);
        std::ofstream log(c.out / (tag + ".log.jsonl"));
        if (!log) throw IoError("cannot open " + (c.out / (tag + ".log.jsonl")).string() + " for writing");
        options.log = &log;
        options.on_step = progress_printer(c.progress, tag, plan.total_steps(rc.data));
        train_stage(rc.model, params, rc.data, plan, rc.seed, options);
        log.flush();
        if (!log) throw IoError("write failure on " + (c.out / (tag + ".log.jsonl")).string());
        save_checkpoint(c.out / (tag + ".ckpt"), rc.model, params);
    }
}

// ---------------------------------------------------------------------------

void cmd_denoise(const DenoiseCommand& c) {
    const Model model = load_checkpoint(c.ckpt);
    const Tensor image = read_ppm(c.in);
    Tensor x_hat, n_hat;
    if (c.tile || c.stride) {
        const TileConfig cfg = tile_config(c.tile, c.stride);
        x_hat = tiled_denoise(image, model, cfg);
        if (c.noise_map) {
            n_hat = tiled_denoise(image, [&](const Tensor& t) { return model.run(t).n_hat; }, cfg);
        }
    } else {
        check_untiled(image, model.config(), c.in);
        ModelOutput out = model.run(image);
        x_hat = std::move(out.x_hat);
        n_hat = std::move(out.n_hat);
    }
    write_ppm(c.out, x_hat);
    if (c.noise_map) write_ppm(*c.noise_map, noise_visualisation(n_hat));
}

// ---------------------------------------------------------------------------

MetricReport cmd_eval(const EvalCommand& c) {
    if (!c.identity && !c.ckpt) throw ConfigError("eval needs --ckpt (or --identity to score the noisy inputs)");
    Json manifest;
    try {
        manifest = Json::parse(read_text(c.pairs));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(c.pairs.string() + ": " + e.what());
    }
    if (!manifest.contains("samples") || !manifest["samples"].is_array()) {
        throw FormatError(c.pairs.string() + ": manifest has no 'samples' array");
    }
    const fs::path root = c.pairs.parent_path();
    std::vector<std::pair<fs::path, fs::path>> pairs;
    std::string missing;
    for (const auto& s : manifest["samples"]) {
        if (!s.contains("noisy") || !s.contains("clean") || !s["noisy"].is_string() || !s["clean"].is_string()) {
            throw FormatError(c.pairs.string() + ": every sample needs 'noisy' and 'clean' paths");
        }
        const fs::path noisy = root / s["noisy"].get<std::string>();
        const fs::path clean = root / s["clean"].get<std::string>();
        for (const auto& p : {noisy, clean}) {
            if (!fs::exists(p)) missing += "\n  missing: " + p.string();
        }
        pairs.emplace_back(noisy, clean);
    }
    if (!missing.empty()) throw IoError("eval: manifest references files that do not exist:" + missing);

    std::optional<Model> model;
    if (!c.identity) model.emplace(load_checkpoint(*c.ckpt));
    MetricOptions mo;
    mo.quantize = c.quantize;
    MetricReport report;
    for (const auto& [noisy, clean] : pairs) {
        const Tensor y = read_ppm(noisy);
        const Tensor x = read_ppm(clean);
        Tensor est;
        if (c.identity) {
            est = y;
        } else if (c.tile || c.stride) {
            est = tiled_denoise(y, *model, tile_config(c.tile, c.stride));
        } else {
            check_untiled(y, model->config(), noisy);
            est = model->denoise(y);
        }
        report.images.push_back(measure(noisy.filename().string(), est, x, mo));
    }
    if (!c.report.parent_path().empty()) make_dir(c.report.parent_path());
    write_text(c.report, report.to_jsonl());
    write_text(fs::path(c.report.string() + ".txt"), report.to_text());
    return report;
}

// ---------------------------------------------------------------------------

AblationResult cmd_ablate(const AblateCommand& c) {
    const RunConfig rc = RunConfig::load(c.config);
    std::vector<AblationConfig> rows;
    for (const auto& row : AblationConfig::table_rows()) {
        if (c.rows.empty() || std::find(c.rows.begin(), c.rows.end(), row.id) != c.rows.end()) rows.push_back(row);
    }
    if (rows.empty()) throw ConfigError("--rows selects no ablation row (valid ids are 1-6)");
    make_dir(c.out);
    write_text(c.out / "config.json", rc.dump());

    const StagePlan plan = rc.plan(1);
    TrainOptions options;
    options.threads = threads_from_env();
    options.on_step = progress_printer(c.progress, "ablation", plan.total_steps(rc.data));
    const AblationResult result = run_ablation(rows, rc.model, rc.data, plan, rc.seed, options);

    Json out_rows = Json::array();
    for (const auto& r : result.rows) {
        out_rows.push_back(Json{{"id", r.config.id},
                                {"dual_stream", r.config.dual_stream},
                                {"ortho", r.config.ortho},
                                {"pos_encoding", to_string(r.config.pos_encoding)},
                                {"eba", to_string(r.config.eba)},
                                {"teacher", r.config.teacher},
                                {"psnr_db", r.psnr_db},
                                {"ssim", r.ssim}});
    }
    write_text(c.out / "ablation.md", result.to_markdown());
    write_text(c.out / "ablation.json",
               Json{{"noisy_psnr_db", result.noisy_psnr_db}, {"rows", std::move(out_rows)}}.dump(2) + "\n");
    return result;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const ContractError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return 3;
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    return 1;
}

}  // namespace tcdnet
