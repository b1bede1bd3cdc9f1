// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "tcdnet/errors.hpp"
#include "tcdnet/image_io.hpp"

namespace tcdnet {

namespace {

constexpr std::size_t kWindow = 11;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double total = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = static_cast<double>(i) - 5.0;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

// Valid-mode separable filtering of one [H,W] plane.
std::vector<double> filter_valid(const double* src, std::size_t h, std::size_t w, const std::array<double, kWindow>& k) {
    const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> tmp(h * ow);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < kWindow; ++i) acc += k[i] * src[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < kWindow; ++i) acc += k[i] * tmp[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    }
    return out;
}

double ssim_plane(const double* a, const double* b, std::size_t h, std::size_t w, double max_val) {
    static const auto k = gaussian_window();
    const double c1 = (0.01 * max_val) * (0.01 * max_val);
    const double c2 = (0.03 * max_val) * (0.03 * max_val);
    const std::size_t n = h * w;
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, k), mu_b = filter_valid(b, h, w, k);
    const auto e_aa = filter_valid(aa.data(), h, w, k), e_bb = filter_valid(bb.data(), h, w, k);
    const auto e_ab = filter_valid(ab.data(), h, w, k);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                 ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    if (a.size() == 0) throw DimensionError(std::string(op) + ": empty image");
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    require_same("psnr", a, b);
    if (!(max_val > 0.0)) throw ContractError("psnr: max_val must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

double ssim(const Tensor& a, const Tensor& b, double max_val) {
    require_same("ssim", a, b);
    if (a.rank() != 2 && a.rank() != 3) throw DimensionError("ssim: expected [H,W] or [C,H,W]");
    const std::size_t channels = a.rank() == 3 ? a.dim(0) : 1;
    const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
    if (h < kWindow || w < kWindow) {
        throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " is smaller than the 11x11 window");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        total += ssim_plane(a.data().data() + c * h * w, b.data().data() + c * h * w, h, w, max_val);
    }
    return total / static_cast<double>(channels);
}

double MetricReport::mean_psnr() const {
    if (images.empty()) return 0.0;
    double s = 0.0;
    for (const auto& m : images) s += m.psnr_db;
    return s / static_cast<double>(images.size());
}

double MetricReport::mean_ssim() const {
    if (images.empty()) return 0.0;
    double s = 0.0;
    for (const auto& m : images) s += m.ssim;
    return s / static_cast<double>(images.size());
}

std::string MetricReport::to_text() const {
    std::size_t width = 4;
    for (const auto& m : images) width = std::max(width, m.name.size());
    auto row = [&](const std::string& name, const std::string& p, const std::string& s) {
        std::string out = name;
        out.append(width - name.size() + 2, ' ');
        out += std::string(10 - std::min<std::size_t>(10, p.size()), ' ') + p;
        out += std::string(10 - std::min<std::size_t>(10, s.size()), ' ') + s + "\n";
        return out;
    };
    std::string out = row("image", "PSNR(dB)", "SSIM");
    for (const auto& m : images) out += row(m.name, fixed(m.psnr_db, 4), fixed(m.ssim, 6));
    out += row("mean", fixed(mean_psnr(), 4), fixed(mean_ssim(), 6));
    return out;
}

std::string MetricReport::to_jsonl() const {
    std::string out;
    for (const auto& m : images) {
        out += nlohmann::ordered_json{{"name", m.name}, {"psnr_db", m.psnr_db}, {"ssim", m.ssim}}.dump() + "\n";
    }
    out += nlohmann::ordered_json{{"name", "mean"}, {"psnr_db", mean_psnr()}, {"ssim", mean_ssim()}}.dump() + "\n";
    return out;
}

ImageMetrics measure(const std::string& name, const Tensor& estimate, const Tensor& reference,
                     const MetricOptions& options) {
    if (options.quantize) {
        const Tensor e = quantize8(estimate), r = quantize8(reference);
        return {name, psnr(e, r, options.max_val), ssim(e, r, options.max_val)};
    }
    return {name, psnr(estimate, reference, options.max_val), ssim(estimate, reference, options.max_val)};
}

}  // namespace tcdnet
