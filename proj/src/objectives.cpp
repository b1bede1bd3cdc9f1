// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/objectives.hpp"

#include <cmath>
#include <string>

#include "tcdnet/errors.hpp"
#include "tcdnet/ops.hpp"
#include "tcdnet/rng.hpp"

namespace tcdnet {

void LossWeights::validate() const {
    if (!(noise >= 0.0) || !(ortho >= 0.0) || !(teacher >= 0.0)) {
        throw ConfigError("loss weights must be non-negative");
    }
}

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
    SplitMix64 rng(derive_seed(seed, Stream::extractor));
    std::size_t cin = 3;
    for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t cout = kWidths[s];
        const double stddev = std::sqrt(2.0 / static_cast<double>(cin * 9));
        weights_[s] = Tensor({cout, cin, 3, 3});
        for (double& v : weights_[s].data()) v = stddev * rng.normal();
        biases_[s] = Tensor({cout});
        for (double& v : biases_[s].data()) v = rng.uniform(-0.05, 0.05);
        cin = cout;
    }
}

Var FeatureExtractor::extract(Var image) const {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != 3) throw DimensionError("extract_features: expected [3,H,W], got " + shape_string(s));
    if (s[1] < 8 || s[2] < 8) {
        throw DimensionError("extract_features: image " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                             " is too small for three 2x pools (need >= 8x8)");
    }
    Graph& g = *image.graph;
    Var x = image;
    for (std::size_t k = 0; k < 3; ++k) {
        x = avg_pool2x2(gelu(conv2d_3x3(x, g.frozen(weights_[k]), g.frozen(biases_[k]))));
    }
    return x;
}

Tensor FeatureExtractor::extract(const Tensor& image) const {
    Graph g(false);
    return g.value(extract(g.constant(image)));
}

Var loss_rec(Var x_hat, Var x, double eps) { return mean(charbonnier(sub(x_hat, x), eps)); }

Var loss_noise(Var n_hat, Var y, Var x, double eps) { return mean(charbonnier(sub(n_hat, sub(y, x)), eps)); }

Var loss_ortho(Var z_c, Var z_n, double delta) { return mean(abs_cosine_rows(z_c, z_n, delta)); }

Var loss_teacher(Var x_hat, const Tensor& teacher, const FeatureExtractor& phi) {
    if (x_hat.shape() != teacher.shape()) {
        throw DimensionError("loss_teacher: prediction " + shape_string(x_hat.shape()) + " vs teacher " +
                             shape_string(teacher.shape()));
    }
    Graph& g = *x_hat.graph;
    Var target = g.constant(phi.extract(teacher));
    return mean(abs(sub(phi.extract(x_hat), target)));
}

LossBreakdown total_loss(const OutputVars& out, const DataSample& sample, const LossWeights& w,
                         const FeatureExtractor& phi, double eps) {
    w.validate();
    Graph& g = *out.x_hat.graph;
    if (sample.x.shape() != out.x_hat.shape() || sample.y.shape() != out.n_hat.shape()) {
        throw DimensionError("total_loss: sample " + shape_string(sample.x.shape()) + " vs prediction " +
                             shape_string(out.x_hat.shape()));
    }
    Var x = g.constant(sample.x);
    Var y = g.constant(sample.y);

    LossBreakdown b;
    Var rec = loss_rec(out.x_hat, x, eps);
    Var noise = loss_noise(out.n_hat, y, x, eps);
    Var ortho = loss_ortho(out.z_c, out.z_n);
    b.rec = rec.value().item();
    b.noise = noise.value().item();
    b.ortho = ortho.value().item();

    Var total = rec;
    if (w.noise != 0.0) total = add(total, scale(noise, w.noise));
    if (w.ortho != 0.0) total = add(total, scale(ortho, w.ortho));
    if (sample.teacher && w.teacher != 0.0) {
        Var teacher = loss_teacher(out.x_hat, *sample.teacher, phi);
        b.teacher = teacher.value().item();
        total = add(total, scale(teacher, w.teacher));
    }
    b.total = total;
    return b;
}

}  // namespace tcdnet
