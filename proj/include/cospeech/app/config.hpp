#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cospeech/app/synth.hpp"
#include "cospeech/audio/encoder.hpp"
#include "cospeech/diffusion/diffusion.hpp"
#include "cospeech/metrics/metrics.hpp"
#include "cospeech/model/denoiser.hpp"
#include "cospeech/train/trainer.hpp"

namespace cospeech {

/// Everything one run needs. Seeds for initialization, noise, data order,
/// sampling and metric pairs are all derived from `seed`.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string layout = "upper43";
    DenoiserConfig model;
    AudioEncoderConfig audio;
    MelConfig mel;
    int T = 1000;
    double schedule_offset = 0.008;
    NoiseMode noise_mode = NoiseMode::kVariancePreserving;
    TrainConfig pretrain;  // max_steps is the step budget; 0 skips the stage
    TrainConfig finetune;
    SamplerConfig sampler;
    SyntheticSpec data;
    int train_clips = 64;
    int heldout_clips = 32;
    ExtractorConfig extractor;
    double ba_sigma = 0.1;
    int diversity_pairs = 500;
    std::filesystem::path out_dir = "cospeech_out";

    RunConfig();
    /// Throws ConfigError naming the first inconsistent field.
    void validate() const;
    NoiseSchedule schedule() const;
    JointLayout joint_layout() const;
};

/// INI text with [run] [model] [audio] [schedule] [pretrain] [finetune]
/// [sampler] [data] [eval] sections. Unknown keys are errors. Seeds inside the
/// run are re-derived from [run] seed. COSPEECH_OUT_DIR, when set, replaces
/// [run] out_dir.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical INI text that parses back to the same configuration.
std::string format_run_config(const RunConfig& cfg);

}  // namespace cospeech
