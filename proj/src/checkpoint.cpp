// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "tcdnet/errors.hpp"

namespace tcdnet {

namespace {

constexpr char kMagic[4] = {'T', 'C', 'D', 'N'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) {
            throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) + " (need " +
                              std::to_string(n) + " more)");
        }
    }
    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::string printable_magic(std::span<const std::uint8_t> bytes) {
    std::string out;
    for (std::size_t i = 0; i < 4 && i < bytes.size(); ++i) {
        char buf[8];
        const auto c = bytes[i];
        if (c >= 0x20 && c < 0x7f) {
            out += static_cast<char>(c);
        } else {
            std::snprintf(buf, sizeof buf, "\\x%02x", c);
            out += buf;
        }
    }
    return out;
}

CheckpointEntry meta(const std::string& name, double v) {
    return {"meta." + name, Shape{1}, {static_cast<float>(v)}};
}

}  // namespace

std::vector<std::uint8_t> encode_entries(std::span<const CheckpointEntry> entries) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff) throw FormatError("checkpoint entry name too long: " + e.name);
        if (e.shape.size() > 0xff) throw FormatError("checkpoint entry rank too large: " + e.name);
        if (shape_size(e.shape) != e.values.size()) throw FormatError("checkpoint entry size mismatch: " + e.name);
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        w.u8(static_cast<std::uint8_t>(e.shape.size()));
        for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
        for (float f : e.values) w.f32(f);
    }
    return w.take();
}

std::vector<CheckpointEntry> decode_entries(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not a TCDN checkpoint: magic bytes are '" + printable_magic(bytes) + "', expected 'TCDN'");
    }
    Reader r(bytes.subspan(4));
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported TCDN checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.u32();
    std::vector<CheckpointEntry> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        e.name = r.str(r.u16());
        const auto rank = r.u8();
        for (std::uint8_t k = 0; k < rank; ++k) e.shape.push_back(r.u32());
        const auto n = shape_size(e.shape);
        r.need(4 * n);
        e.values.resize(n);
        for (auto& f : e.values) f = r.f32();
        out.push_back(std::move(e));
    }
    if (!r.done()) throw FormatError("trailing bytes after last checkpoint entry");
    return out;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& c, const ModelParams& params) {
    std::vector<CheckpointEntry> entries = {
        meta("patch_size", static_cast<double>(c.patch_size)),
        meta("embed_dim", static_cast<double>(c.embed_dim)),
        meta("depth", static_cast<double>(c.depth)),
        meta("heads", static_cast<double>(c.heads)),
        meta("mlp_ratio", c.mlp_ratio),
        meta("eba_topology", static_cast<double>(c.eba_topology)),
        meta("pos_encoding", static_cast<double>(c.pos_encoding)),
        meta("eba_bottleneck_ratio", c.eba_bottleneck_ratio),
        meta("ape_grid", static_cast<double>(c.ape_grid)),
    };
    params.for_each([&](const std::string& name, const Tensor& t) {
        CheckpointEntry e{name, t.shape(), {}};
        e.values.reserve(t.size());
        for (double v : t.data()) e.values.push_back(static_cast<float>(v));
        entries.push_back(std::move(e));
    });
    return encode_entries(entries);
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
    const auto entries = decode_entries(bytes);
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) {
        if (!by_name.emplace(e.name, &e).second) throw FormatError("duplicate checkpoint entry " + e.name);
    }
    auto meta_value = [&](const std::string& key) -> double {
        auto it = by_name.find("meta." + key);
        if (it == by_name.end() || it->second->values.size() != 1) {
            throw FormatError("checkpoint is missing meta." + key);
        }
        return it->second->values[0];
    };
    auto as_size = [&](const std::string& key) { return static_cast<std::size_t>(meta_value(key)); };

    ModelConfig c;
    c.patch_size = as_size("patch_size");
    c.embed_dim = as_size("embed_dim");
    c.depth = as_size("depth");
    c.heads = as_size("heads");
    c.mlp_ratio = meta_value("mlp_ratio");
    const auto topo = as_size("eba_topology");
    const auto pos = as_size("pos_encoding");
    if (topo > 2 || pos > 2) throw FormatError("checkpoint meta has an invalid enum value");
    c.eba_topology = static_cast<EbaTopology>(topo);
    c.pos_encoding = static_cast<PosEncoding>(pos);
    c.eba_bottleneck_ratio = meta_value("eba_bottleneck_ratio");
    c.ape_grid = as_size("ape_grid");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint meta is inconsistent: ") + e.what());
    }

    ModelParams params = zero_params(c);
    std::size_t used = 0;
    params.for_each([&](const std::string& name, Tensor& t) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint is missing parameter " + name);
        const auto& e = *it->second;
        if (e.shape != t.shape()) {
            throw FormatError("checkpoint parameter " + name + " has shape " + shape_string(e.shape) + ", expected " +
                              shape_string(t.shape()));
        }
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(e.values[i]);
        ++used;
    });
    std::size_t meta_count = 0;
    for (const auto& e : entries) meta_count += e.name.starts_with("meta.") ? 1 : 0;
    if (used + meta_count != entries.size()) throw FormatError("checkpoint has unexpected extra entries");
    return Model(c, std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params) {
    write_file_bytes(path, encode_checkpoint(config, params));
}

Model load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void round_to_checkpoint_precision(ModelParams& params) {
    params.for_each([](const std::string&, Tensor& t) {
        for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    });
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on " + path.string());
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace tcdnet
