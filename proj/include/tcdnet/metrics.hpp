// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "tcdnet/tensor.hpp"

namespace tcdnet {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(max^2 / MSE), capped at 99 dB when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

/// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03),
/// computed per channel and averaged. Accepts [H,W] or [C,H,W] with H, W >= 11.
double ssim(const Tensor& a, const Tensor& b, double max_val = 1.0);

struct ImageMetrics {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<ImageMetrics> images;

    double mean_psnr() const;
    double mean_ssim() const;
    /// Fixed-width text table with a trailing mean row.
    std::string to_text() const;
    /// One JSON object per image, then {"name":"mean",...}.
    std::string to_jsonl() const;
};

struct MetricOptions {
    double max_val = 1.0;
    bool quantize = false;  // snap both images to 8-bit levels first
};

ImageMetrics measure(const std::string& name, const Tensor& estimate, const Tensor& reference,
                     const MetricOptions& options = {});

}  // namespace tcdnet
