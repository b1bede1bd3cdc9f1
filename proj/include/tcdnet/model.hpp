// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "tcdnet/graph.hpp"
#include "tcdnet/tensor.hpp"

namespace tcdnet {

enum class EbaTopology : std::uint8_t { none = 0, serial = 1, parallel = 2 };
enum class PosEncoding : std::uint8_t { ape = 0, cpe = 1, hybrid = 2 };

std::string_view to_string(EbaTopology t);
std::string_view to_string(PosEncoding p);
EbaTopology parse_eba_topology(std::string_view s);
PosEncoding parse_pos_encoding(std::string_view s);

struct ModelConfig {
    std::size_t patch_size = 4;
    std::size_t embed_dim = 64;
    std::size_t depth = 4;
    std::size_t heads = 4;
    double mlp_ratio = 4.0;
    EbaTopology eba_topology = EbaTopology::serial;
    PosEncoding pos_encoding = PosEncoding::hybrid;
    /// EBA hidden width is embed_dim / eba_bottleneck_ratio.
    double eba_bottleneck_ratio = 4.0;
    /// Native absolute-embedding grid; other resolutions are resampled from it.
    std::size_t ape_grid = 8;

    std::size_t mlp_hidden() const;
    std::size_t eba_hidden() const;
    std::size_t head_dim() const { return embed_dim / heads; }
    bool uses_ape() const { return pos_encoding != PosEncoding::cpe; }
    bool uses_cpe() const { return pos_encoding != PosEncoding::ape; }

    /// Throws ConfigError on inconsistent values.
    void validate() const;

    static ModelConfig tiny();
    /// ViT-L/16 dimensions.
    static ModelConfig large();
    static ModelConfig preset(std::string_view name);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EBAParams {
    Tensor ln_gamma, ln_beta;
    Tensor w1, b1;  // [d, d/r], [d/r]
    Tensor w2, b2;  // [d/r, d], [d]
};

struct BlockParams {
    Tensor cpe_kernel, cpe_bias;  // [d,3,3], [d]
    Tensor ln1_gamma, ln1_beta;
    Tensor qkv_w, qkv_b;    // [d, 3d]
    Tensor proj_w, proj_b;  // [d, d]
    Tensor ln2_gamma, ln2_beta;
    Tensor mlp_w1, mlp_b1;  // [d, h]
    Tensor mlp_w2, mlp_b2;  // [h, d]
    EBAParams eba;
};

struct HeadParams {
    Tensor content_w, content_b;    // [d, d]
    Tensor noise_w, noise_b;        // [d, d]
    Tensor image_w, image_b;        // [d, 3 p^2]
    Tensor noisemap_w, noisemap_b;  // [d, 3 p^2]
};

/// Every learnable weight. Components disabled by the configuration are left empty
/// and are skipped by enumeration.
struct ModelParams {
    Tensor patch_w, patch_b;  // [3 p^2, d], [d]
    Tensor ape;               // [d, g, g]
    std::vector<BlockParams> blocks;
    HeadParams head;

    /// Calls f(name, tensor) for every non-empty parameter in a fixed order.
    void for_each(const std::function<void(const std::string&, Tensor&)>& f);
    void for_each(const std::function<void(const std::string&, const Tensor&)>& f) const;
    std::vector<std::string> names() const;
    std::size_t count() const;

    friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Seeded initialisation: linear weights N(0, 0.02), zero biases, unit LayerNorm
/// gains, APE N(0, 0.02), zero CPE kernels. Every value is exactly representable as f32.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
/// Same layout as init_params with every value zero.
ModelParams zero_params(const ModelConfig& config);

struct TokenGrid {
    Var tokens;  // [N, d]
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
};

/// Graph-side model outputs.
struct OutputVars {
    Var x_hat;  // [3,H,W]
    Var n_hat;  // [3,H,W]
    Var z_c;    // [N,d]
    Var z_n;    // [N,d]
};

/// Plain-value model outputs.
struct ModelOutput {
    Tensor x_hat, n_hat, z_c, z_n;
};

// Building blocks. Parameters are bound through Graph::param.
TokenGrid patch_embed(Graph& g, Var image, const ModelParams& params, std::size_t patch);
/// Catmull-Rom (a = -0.5) resampling matrix [dst, src], half-pixel centres, clamped taps.
RowMatrix bicubic_matrix_1d(std::size_t src, std::size_t dst);
/// ape [d, gh, gw] resampled to (grid_h, grid_w) and flattened to [N, d].
Var interpolate_ape(Var ape, std::size_t grid_h, std::size_t grid_w);
TokenGrid cpe_inject(const TokenGrid& t, Var kernel, Var bias);
/// Residual branch of EBA only: W2 gelu(W1 LN(t - mean(t)) + b1) + b2.
Var eba_branch(Var tokens, const EBAParams& params);
/// t + eba_branch(t).
Var eba(Var tokens, const EBAParams& params);
Var attention(Var normed, const BlockParams& block, std::size_t heads);
TokenGrid transformer_block(const TokenGrid& t, const BlockParams& block, const ModelConfig& config);
OutputVars dual_head(Var z_all, const HeadParams& head, const TokenGrid& grid, std::size_t patch);

/// y [3,H,W] -> (x_hat, n_hat, z_c, z_n).
OutputVars forward(Graph& g, Var image, const ModelParams& params, const ModelConfig& config);

/// Inference wrapper without gradient tracking.
class Model {
public:
    Model(ModelConfig config, ModelParams params);

    const ModelConfig& config() const noexcept { return config_; }
    const ModelParams& params() const noexcept { return params_; }
    ModelParams& params() noexcept { return params_; }

    ModelOutput run(const Tensor& image) const;
    Tensor denoise(const Tensor& image) const { return run(image).x_hat; }

private:
    ModelConfig config_;
    ModelParams params_;
};

}  // namespace tcdnet
