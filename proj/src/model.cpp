// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcdnet/errors.hpp"
#include "tcdnet/ops.hpp"
#include "tcdnet/rng.hpp"

namespace tcdnet {

namespace {

constexpr double kLayerNormEps = 1e-6;
constexpr double kInitStd = 0.02;
constexpr std::size_t kChannels = 3;

}  // namespace

std::string_view to_string(EbaTopology t) {
    switch (t) {
        case EbaTopology::none: return "none";
        case EbaTopology::serial: return "serial";
        case EbaTopology::parallel: return "parallel";
    }
    return "?";
}

std::string_view to_string(PosEncoding p) {
    switch (p) {
        case PosEncoding::ape: return "ape";
        case PosEncoding::cpe: return "cpe";
        case PosEncoding::hybrid: return "hybrid";
    }
    return "?";
}

EbaTopology parse_eba_topology(std::string_view s) {
    if (s == "none") return EbaTopology::none;
    if (s == "serial") return EbaTopology::serial;
    if (s == "parallel") return EbaTopology::parallel;
    throw ConfigError("unknown eba_topology '" + std::string(s) + "' (expected none|serial|parallel)");
}

PosEncoding parse_pos_encoding(std::string_view s) {
    if (s == "ape") return PosEncoding::ape;
    if (s == "cpe") return PosEncoding::cpe;
    if (s == "hybrid") return PosEncoding::hybrid;
    throw ConfigError("unknown pos_encoding '" + std::string(s) + "' (expected ape|cpe|hybrid)");
}

std::size_t ModelConfig::mlp_hidden() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(embed_dim) * mlp_ratio));
}

std::size_t ModelConfig::eba_hidden() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(embed_dim) / eba_bottleneck_ratio));
}

void ModelConfig::validate() const {
    if (patch_size < 1) throw ConfigError("model.patch_size must be >= 1");
    if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
    if (depth < 1) throw ConfigError("model.depth must be >= 1");
    if (heads < 1 || embed_dim % heads != 0) {
        throw ConfigError("model.embed_dim (" + std::to_string(embed_dim) + ") must be divisible by model.heads (" +
                          std::to_string(heads) + ")");
    }
    if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) throw ConfigError("model.mlp_ratio must give a positive width");
    if (!(eba_bottleneck_ratio >= 1.0) || eba_hidden() < 1) {
        throw ConfigError("model.eba_bottleneck_ratio must be >= 1 and leave a positive width");
    }
    if (ape_grid < 1) throw ConfigError("model.ape_grid must be >= 1");
}

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::large() {
    ModelConfig c;
    c.patch_size = 16;
    c.embed_dim = 1024;
    c.depth = 24;
    c.heads = 16;
    c.ape_grid = 16;
    return c;
}

ModelConfig ModelConfig::preset(std::string_view name) {
    if (name == "tiny") return tiny();
    if (name == "large") return large();
    throw ConfigError("unknown model preset '" + std::string(name) + "' (expected tiny|large)");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <class Params, class F>
void visit_params(Params& p, F&& f) {
    auto emit = [&](const std::string& name, auto& t) {
        if (!t.empty()) f(name, t);
    };
    emit("patch_embed.weight", p.patch_w);
    emit("patch_embed.bias", p.patch_b);
    emit("pos_embed", p.ape);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::string pre = "blocks." + std::to_string(i) + ".";
        emit(pre + "cpe.weight", b.cpe_kernel);
        emit(pre + "cpe.bias", b.cpe_bias);
        emit(pre + "norm1.weight", b.ln1_gamma);
        emit(pre + "norm1.bias", b.ln1_beta);
        emit(pre + "attn.qkv.weight", b.qkv_w);
        emit(pre + "attn.qkv.bias", b.qkv_b);
        emit(pre + "attn.proj.weight", b.proj_w);
        emit(pre + "attn.proj.bias", b.proj_b);
        emit(pre + "norm2.weight", b.ln2_gamma);
        emit(pre + "norm2.bias", b.ln2_beta);
        emit(pre + "mlp.fc1.weight", b.mlp_w1);
        emit(pre + "mlp.fc1.bias", b.mlp_b1);
        emit(pre + "mlp.fc2.weight", b.mlp_w2);
        emit(pre + "mlp.fc2.bias", b.mlp_b2);
        emit(pre + "eba.norm.weight", b.eba.ln_gamma);
        emit(pre + "eba.norm.bias", b.eba.ln_beta);
        emit(pre + "eba.fc1.weight", b.eba.w1);
        emit(pre + "eba.fc1.bias", b.eba.b1);
        emit(pre + "eba.fc2.weight", b.eba.w2);
        emit(pre + "eba.fc2.bias", b.eba.b2);
    }
    emit("head.content.weight", p.head.content_w);
    emit("head.content.bias", p.head.content_b);
    emit("head.noise.weight", p.head.noise_w);
    emit("head.noise.bias", p.head.noise_b);
    emit("head.image_decoder.weight", p.head.image_w);
    emit("head.image_decoder.bias", p.head.image_b);
    emit("head.noise_decoder.weight", p.head.noisemap_w);
    emit("head.noise_decoder.bias", p.head.noisemap_b);
}

// Fills `t` from rng with N(0, std) when std > 0, else leaves the constant fill.
// Draws are rounded to float so a fresh model survives a checkpoint round trip.
Tensor make(Shape shape, double fill, double stddev, SplitMix64& rng) {
    Tensor t(std::move(shape), fill);
    if (stddev > 0.0) {
        for (double& v : t.data()) v = static_cast<float>(stddev * rng.normal());
    }
    return t;
}

}  // namespace

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& f) { visit_params(*this, f); }

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& f) const {
    visit_params(*this, f);
}

std::vector<std::string> ModelParams::names() const {
    std::vector<std::string> out;
    for_each([&](const std::string& n, const Tensor&) { out.push_back(n); });
    return out;
}

std::size_t ModelParams::count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    std::vector<const Tensor*> ta, tb;
    std::vector<std::string> na, nb;
    a.for_each([&](const std::string& n, const Tensor& t) {
        na.push_back(n);
        ta.push_back(&t);
    });
    b.for_each([&](const std::string& n, const Tensor& t) {
        nb.push_back(n);
        tb.push_back(&t);
    });
    if (na != nb) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!(*ta[i] == *tb[i])) return false;
    }
    return true;
}

namespace {

ModelParams build_params(const ModelConfig& c, SplitMix64* rng) {
    c.validate();
    SplitMix64 dummy(0);
    SplitMix64& r = rng ? *rng : dummy;
    const double s = rng ? kInitStd : 0.0;
    const double one = rng ? 1.0 : 0.0;
    const std::size_t d = c.embed_dim, p = c.patch_size, tok = kChannels * p * p;
    const std::size_t h = c.mlp_hidden(), e = c.eba_hidden();

    ModelParams m;
    m.patch_w = make({tok, d}, 0.0, s, r);
    m.patch_b = Tensor::zeros({d});
    if (c.uses_ape()) m.ape = make({d, c.ape_grid, c.ape_grid}, 0.0, s, r);
    m.blocks.resize(c.depth);
    for (auto& b : m.blocks) {
        if (c.uses_cpe()) {
            b.cpe_kernel = Tensor::zeros({d, 3, 3});
            b.cpe_bias = Tensor::zeros({d});
        }
        b.ln1_gamma = Tensor({d}, one);
        b.ln1_beta = Tensor::zeros({d});
        b.qkv_w = make({d, 3 * d}, 0.0, s, r);
        b.qkv_b = Tensor::zeros({3 * d});
        b.proj_w = make({d, d}, 0.0, s, r);
        b.proj_b = Tensor::zeros({d});
        b.ln2_gamma = Tensor({d}, one);
        b.ln2_beta = Tensor::zeros({d});
        b.mlp_w1 = make({d, h}, 0.0, s, r);
        b.mlp_b1 = Tensor::zeros({h});
        b.mlp_w2 = make({h, d}, 0.0, s, r);
        b.mlp_b2 = Tensor::zeros({d});
        if (c.eba_topology != EbaTopology::none) {
            b.eba.ln_gamma = Tensor({d}, one);
            b.eba.ln_beta = Tensor::zeros({d});
            b.eba.w1 = make({d, e}, 0.0, s, r);
            b.eba.b1 = Tensor::zeros({e});
            b.eba.w2 = make({e, d}, 0.0, s, r);
            b.eba.b2 = Tensor::zeros({d});
        }
    }
    m.head.content_w = make({d, d}, 0.0, s, r);
    m.head.content_b = Tensor::zeros({d});
    m.head.noise_w = make({d, d}, 0.0, s, r);
    m.head.noise_b = Tensor::zeros({d});
    m.head.image_w = make({d, tok}, 0.0, s, r);
    m.head.image_b = Tensor::zeros({tok});
    m.head.noisemap_w = make({d, tok}, 0.0, s, r);
    m.head.noisemap_b = Tensor::zeros({tok});
    return m;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    SplitMix64 rng(derive_seed(seed, Stream::init));
    return build_params(config, &rng);
}

ModelParams zero_params(const ModelConfig& config) { return build_params(config, nullptr); }

// ---------------------------------------------------------------------------
// Forward pass

TokenGrid patch_embed(Graph& g, Var image, const ModelParams& params, std::size_t patch) {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != kChannels) {
        throw DimensionError("patch_embed: expected a [3,H,W] image, got " + shape_string(s));
    }
    Var patches = patchify(image, patch);
    Var tokens = linear(patches, g.param(params.patch_w), g.param(params.patch_b));
    return {tokens, s[1] / patch, s[2] / patch};
}

RowMatrix bicubic_matrix_1d(std::size_t src, std::size_t dst) {
    constexpr double a = -0.5;
    auto kernel = [](double x) {
        x = std::abs(x);
        if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
        if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
        return 0.0;
    };
    RowMatrix m = RowMatrix::Zero(static_cast<Eigen::Index>(dst), static_cast<Eigen::Index>(src));
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t i = 0; i < dst; ++i) {
        const double pos = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        const double base = std::floor(pos);
        const double t = pos - base;
        for (int k = -1; k <= 2; ++k) {
            const double w = kernel(t - k);
            auto idx = static_cast<long>(base) + k;
            idx = std::clamp(idx, 0L, static_cast<long>(src) - 1);
            m(static_cast<Eigen::Index>(i), idx) += w;
        }
    }
    return m;
}

Var interpolate_ape(Var ape, std::size_t grid_h, std::size_t grid_w) {
    const auto& s = ape.shape();
    if (s.size() != 3) throw DimensionError("interpolate_ape: expected [d,gh,gw], got " + shape_string(s));
    if (grid_h < 1 || grid_w < 1) throw DimensionError("interpolate_ape: empty target grid");
    const std::size_t d = s[0], gh = s[1], gw = s[2];
    Var flat = transpose2d(reshape(ape, {d, gh * gw}));  // [G, d]
    if (gh == grid_h && gw == grid_w) return flat;
    const RowMatrix rows = bicubic_matrix_1d(gh, grid_h);
    const RowMatrix cols = bicubic_matrix_1d(gw, grid_w);
    // Separable 2-D weights: M[(y,x),(sy,sx)] = rows(y,sy) * cols(x,sx).
    Tensor m({grid_h * grid_w, gh * gw});
    for (std::size_t y = 0; y < grid_h; ++y) {
        for (std::size_t x = 0; x < grid_w; ++x) {
            for (std::size_t sy = 0; sy < gh; ++sy) {
                const double ry = rows(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(sy));
                if (ry == 0.0) continue;
                for (std::size_t sx = 0; sx < gw; ++sx) {
                    m.at(y * grid_w + x, sy * gw + sx) = ry * cols(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(sx));
                }
            }
        }
    }
    return matmul(ape.graph->constant(std::move(m)), flat);
}

TokenGrid cpe_inject(const TokenGrid& t, Var kernel, Var bias) {
    const std::size_t d = t.tokens.shape()[1];
    Var map = reshape(transpose2d(t.tokens), {d, t.grid_h, t.grid_w});
    Var conv = depthwise_conv3x3(map, kernel, bias);
    Var back = transpose2d(reshape(conv, {d, t.grid_h * t.grid_w}));
    return {add(t.tokens, back), t.grid_h, t.grid_w};
}

Var eba_branch(Var tokens, const EBAParams& p) {
    Graph& g = *tokens.graph;
    Var centered = center_rows(tokens);
    Var normed = layer_norm(centered, g.param(p.ln_gamma), g.param(p.ln_beta), kLayerNormEps);
    Var hidden = gelu(linear(normed, g.param(p.w1), g.param(p.b1)));
    return linear(hidden, g.param(p.w2), g.param(p.b2));
}

Var eba(Var tokens, const EBAParams& params) { return add(tokens, eba_branch(tokens, params)); }

Var attention(Var normed, const BlockParams& b, std::size_t heads) {
    Graph& g = *normed.graph;
    const std::size_t d = normed.shape()[1];
    const std::size_t dh = d / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
    Var qkv = linear(normed, g.param(b.qkv_w), g.param(b.qkv_b));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var q = slice(qkv, 1, h * dh, (h + 1) * dh);
        Var k = slice(qkv, 1, d + h * dh, d + (h + 1) * dh);
        Var v = slice(qkv, 1, 2 * d + h * dh, 2 * d + (h + 1) * dh);
        Var weights = softmax_rows(scale(matmul(q, transpose2d(k)), scale_factor));
        outs.push_back(matmul(weights, v));
    }
    Var merged = heads == 1 ? outs[0] : concat(outs, 1);
    return linear(merged, g.param(b.proj_w), g.param(b.proj_b));
}

TokenGrid transformer_block(const TokenGrid& t, const BlockParams& b, const ModelConfig& config) {
    Graph& g = *t.tokens.graph;
    const Var block_in = t.tokens;
    TokenGrid cur = t;
    if (config.uses_cpe()) cur = cpe_inject(cur, g.param(b.cpe_kernel), g.param(b.cpe_bias));

    Var x = cur.tokens;
    Var n1 = layer_norm(x, g.param(b.ln1_gamma), g.param(b.ln1_beta), kLayerNormEps);
    x = add(x, attention(n1, b, config.heads));
    Var n2 = layer_norm(x, g.param(b.ln2_gamma), g.param(b.ln2_beta), kLayerNormEps);
    Var hidden = gelu(linear(n2, g.param(b.mlp_w1), g.param(b.mlp_b1)));
    x = add(x, linear(hidden, g.param(b.mlp_w2), g.param(b.mlp_b2)));

    switch (config.eba_topology) {
        case EbaTopology::serial: x = eba(x, b.eba); break;
        case EbaTopology::parallel: x = add(x, eba_branch(block_in, b.eba)); break;
        case EbaTopology::none: break;
    }
    return {x, cur.grid_h, cur.grid_w};
}

OutputVars dual_head(Var z_all, const HeadParams& head, const TokenGrid& grid, std::size_t patch) {
    Graph& g = *z_all.graph;
    const std::size_t height = grid.grid_h * patch, width = grid.grid_w * patch;
    OutputVars out;
    out.z_c = linear(z_all, g.param(head.content_w), g.param(head.content_b));
    out.z_n = linear(z_all, g.param(head.noise_w), g.param(head.noise_b));
    out.x_hat = unpatchify(linear(out.z_c, g.param(head.image_w), g.param(head.image_b)), kChannels, height, width, patch);
    out.n_hat =
        unpatchify(linear(out.z_n, g.param(head.noisemap_w), g.param(head.noisemap_b)), kChannels, height, width, patch);
    return out;
}

OutputVars forward(Graph& g, Var image, const ModelParams& params, const ModelConfig& config) {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != kChannels) {
        throw DimensionError("forward: expected a [3,H,W] image, got " + shape_string(s));
    }
    if (s[1] % config.patch_size != 0 || s[2] % config.patch_size != 0) {
        throw DimensionError("forward: image " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                             " is not divisible by patch size " + std::to_string(config.patch_size) +
                             "; crop/pad the input or use tiled inference");
    }
    if (params.blocks.size() != config.depth) throw DimensionError("forward: parameter depth does not match config");
    TokenGrid t = patch_embed(g, image, params, config.patch_size);
    if (config.uses_ape()) t.tokens = add(t.tokens, interpolate_ape(g.param(params.ape), t.grid_h, t.grid_w));
    for (const auto& block : params.blocks) t = transformer_block(t, block, config);
    return dual_head(t.tokens, params.head, t, config.patch_size);
}

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
    config_.validate();
}

ModelOutput Model::run(const Tensor& image) const {
    Graph g(false);
    OutputVars o = forward(g, g.constant(image), params_, config_);
    return {g.value(o.x_hat), g.value(o.n_hat), g.value(o.z_c), g.value(o.z_n)};
}

}  // namespace tcdnet
