#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cospeech/audio/audio.hpp"
#include "cospeech/metrics/metrics.hpp"
#include "cospeech/motion/clip.hpp"

namespace cospeech {

struct SyntheticSpec {
    int pattern_count = 4;
    double noise_level = 0.05;
    double beat_period_s = 1.0;
    std::uint64_t seed = 0;
    int frames = 150;
    double fps = 15.0;
    int sample_rate = 16000;
    double amplitude_deg = 30.0;

    /// Throws ConfigError on non-positive fields.
    void validate() const;
};

/// Each pattern moves every joint once per beat around a circle of rotation
/// vectors about its own rest pose. The loop phase slows to a stop at each beat,
/// giving one velocity minimum per beat period. The audio carries a click on each
/// of those minima over band-limited noise whose band identifies the pattern.
struct SyntheticSample {
    MotionClip motion;
    AudioClip audio;
    int pattern = 0;
    double phase_s = 0.0;
    BeatSet clicks;
};

/// `split` names an independent stream ("train", "heldout", ...); the pattern
/// bank depends only on spec.seed, so every split shares the same patterns.
std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec, int count, const std::string& split);

/// Writes <prefix>_NNNN.gmc and <prefix>_NNNN.wav pairs.
void write_synthetic(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                     const std::string& prefix = "clip");

struct PairedClip {
    std::string name;
    MotionClip motion;
    std::optional<AudioClip> audio;
};

/// Every *.gmc in name order, with the same-stem *.wav when present.
std::vector<PairedClip> load_paired_dir(const std::filesystem::path& dir);

}  // namespace cospeech
