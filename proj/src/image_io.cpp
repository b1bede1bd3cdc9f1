// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "tcdnet/checkpoint.hpp"
#include "tcdnet/errors.hpp"

namespace tcdnet {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> in) : in_(in) {}

    void skip_space() {
        while (pos_ < in_.size()) {
            if (in_[pos_] == '#') {
                while (pos_ < in_.size() && in_[pos_] != '\n') ++pos_;
            } else if (std::isspace(in_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space();
        std::size_t v = 0, digits = 0;
        while (pos_ < in_.size() && std::isdigit(in_[pos_])) {
            v = v * 10 + (in_[pos_++] - '0');
            if (++digits > 9) throw FormatError(std::string("PPM ") + what + " is too large");
        }
        if (digits == 0) throw FormatError(std::string("PPM header: expected ") + what);
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance() { ++pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v * 255.0), 0.0, 255.0));
}

Tensor quantize8(const Tensor& image) {
    Tensor out = image;
    for (double& v : out.data()) v = to_byte(v) / 255.0;
    return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimensionError("encode_ppm: expected a [3,H,W] image, got " + shape_string(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2);
    const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + 3 * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) out.push_back(to_byte(image.at(c, y, x)));
        }
    }
    return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (missing P6 magic)");
    HeaderReader r(bytes.subspan(2));
    const std::size_t w = r.number("width");
    const std::size_t h = r.number("height");
    const std::size_t maxval = r.number("maxval");
    if (maxval != 255) throw FormatError("PPM maxval " + std::to_string(maxval) + " is not supported (expected 255)");
    if (w == 0 || h == 0) throw FormatError("PPM has an empty image");
    // Exactly one whitespace byte separates the header from the raster.
    r.advance();
    const std::size_t start = 2 + r.pos();
    if (start + 3 * w * h != bytes.size()) {
        throw FormatError("PPM raster holds " + std::to_string(bytes.size() > start ? bytes.size() - start : 0) +
                          " bytes, expected " + std::to_string(3 * w * h));
    }
    Tensor img({3, h, w});
    const std::uint8_t* p = bytes.data() + start;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = *p++ / 255.0;
        }
    }
    return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) { write_file_bytes(path, encode_ppm(image)); }

Tensor read_ppm(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_ppm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace tcdnet
