// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "CLI11.hpp"

#include "tcdnet/commands.hpp"
#include "tcdnet/errors.hpp"

using namespace tcdnet;

int main(int argc, char** argv) {
    CLI::App app{"tcdnet: transformer denoiser with disentangled content and noise streams"};
    app.require_subcommand(1);

    GenOptions gen;
    std::string sigma = "25", mode = "awgn";
    auto* g = app.add_subcommand("gen", "Generate a synthetic noisy/clean dataset");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--count", gen.count, "Number of pairs")->capture_default_str();
    g->add_option("--mode", mode, "Noise model")->check(CLI::IsMember({"awgn", "scm"}))->capture_default_str();
    g->add_option("--sigma", sigma, "Noise level, '25' or 'LO:HI' on the 0-255 scale")->capture_default_str();
    g->add_option("--seed", gen.seed, "Root seed")->capture_default_str();
    g->add_option("--height", gen.height, "Image height")->capture_default_str();
    g->add_option("--width", gen.width, "Image width")->capture_default_str();

    TrainCommand train;
    std::string init;
    auto* t = app.add_subcommand("train", "Train one or both stages");
    t->add_option("--config", train.config, "Run configuration JSON")->required();
    t->add_option("--stage", train.stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}))->capture_default_str();
    t->add_option("--out", train.out, "Output directory")->required();
    t->add_option("--init", init, "Stage-2 starting checkpoint (default OUT/stage1.ckpt)");

    DenoiseCommand den;
    std::size_t tile = 0, stride = 0;
    std::string noise_map;
    auto* d = app.add_subcommand("denoise", "Denoise one PPM image");
    d->add_option("--ckpt", den.ckpt, "Checkpoint")->required();
    d->add_option("--in", den.in, "Input PPM")->required();
    d->add_option("--out", den.out, "Output PPM")->required();
    d->add_option("--tile", tile, "Tile size P (enables overlap-tile inference)");
    d->add_option("--stride", stride, "Tile stride S (default 3P/4)");
    d->add_option("--noise-map", noise_map, "Also write the predicted noise, mid-grey centred");

    EvalCommand ev;
    std::string ckpt;
    auto* e = app.add_subcommand("eval", "Score a model on a generated manifest");
    e->add_option("--pairs", ev.pairs, "manifest.json written by gen")->required();
    e->add_option("--ckpt", ckpt, "Checkpoint");
    e->add_option("--report", ev.report, "JSON-lines report path (text table goes to REPORT.txt)")->required();
    e->add_flag("--identity", ev.identity, "Skip the model and score the noisy inputs");
    e->add_flag("--quantize", ev.quantize, "Round estimates to 8 bits before scoring");
    e->add_option("--tile", tile, "Tile size P");
    e->add_option("--stride", stride, "Tile stride S");

    AblateCommand ab;
    auto* a = app.add_subcommand("ablate", "Run the six-row component ablation");
    a->add_option("--config", ab.config, "Run configuration JSON")->required();
    a->add_option("--out", ab.out, "Output directory")->required();
    a->add_option("--rows", ab.rows, "Subset of row ids (default all)")->check(CLI::Range(1, 6));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*g) {
            gen.mode = parse_noise_mode(mode);
            std::tie(gen.sigma_min, gen.sigma_max) = parse_sigma_range(sigma);
            cmd_gen(gen);
        } else if (*t) {
            if (!init.empty()) train.init = init;
            train.progress = &std::cerr;
            cmd_train(train);
        } else if (*d) {
            if (d->count("--tile")) den.tile = tile;
            if (d->count("--stride")) den.stride = stride;
            if (!noise_map.empty()) den.noise_map = noise_map;
            cmd_denoise(den);
        } else if (*e) {
            if (!ckpt.empty()) ev.ckpt = ckpt;
            if (e->count("--tile")) ev.tile = tile;
            if (e->count("--stride")) ev.stride = stride;
            std::cout << cmd_eval(ev).to_text();
        } else if (*a) {
            ab.progress = &std::cerr;
            std::cout << cmd_ablate(ab).to_markdown();
        }
    } catch (const std::exception& err) {
        std::cerr << "tcdnet: error: " << err.what() << '\n';
        return exit_code_for(err);
    }
    return 0;
}
