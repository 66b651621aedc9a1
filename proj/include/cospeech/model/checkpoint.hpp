#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cospeech/parameters.hpp"

namespace cospeech {

using ConfigPairs = std::vector<std::pair<std::string, std::string>>;

/// CKPT1 layout: a text manifest
///   CKPT1 / [config] key=value... / [tensors] name rows cols byte_offset... / [end]
/// followed by every tensor as little-endian float32 in manifest order.
struct Checkpoint {
    ConfigPairs config;
    ParameterSet params;
    std::uint64_t payload_hash = 0;  // FNV-1a over the float32 payload bytes

    /// Throws FormatError when the key is absent.
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
};

/// Returns the payload hash of the written file.
std::uint64_t save_checkpoint(const std::filesystem::path& path, const ConfigPairs& config, const ParameterSet& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string hash_hex(std::uint64_t h);

/// Copies values from `src` into `dst`, requiring identical names and shapes.
void assign_parameters(ParameterSet& dst, const ParameterSet& src, const std::string& what);

}  // namespace cospeech
