// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tcdnet/model.hpp"

namespace tcdnet {

/// TCDN checkpoint layout (little-endian):
///
///   "TCDN" | version u32 | entry count u32 |
///   per entry: name length u16 | UTF-8 name | rank u8 | dims u32 x rank | f32 payload
///
/// Entries named "meta.*" carry the model configuration as one-element tensors and
/// precede the parameters, which follow ModelParams enumeration order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

std::vector<std::uint8_t> encode_entries(std::span<const CheckpointEntry> entries);
std::vector<CheckpointEntry> decode_entries(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config, const ModelParams& params);
/// Rebuilds configuration and parameters; throws FormatError on malformed input.
Model decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params);
Model load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to the nearest float so the in-memory model equals what a
/// checkpoint stores.
void round_to_checkpoint_precision(ModelParams& params);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// FNV-1a 64-bit digest, hex encoded. Used for reproducibility reports.
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);

}  // namespace tcdnet
