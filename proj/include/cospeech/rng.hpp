#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cospeech {

/// Derives an independent stream seed for one purpose ("init", "noise",
/// "data", "pairs", ...) from a root seed: splitmix64(root ^ fnv1a(purpose)).
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);

/// 64-bit FNV-1a over raw bytes; also used for checkpoint content hashes.
std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace cospeech
