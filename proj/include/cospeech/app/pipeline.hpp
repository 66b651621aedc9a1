#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cospeech/app/config.hpp"
#include "cospeech/app/synth.hpp"
#include "cospeech/metrics/metrics.hpp"
#include "cospeech/model/controlnet.hpp"
#include "cospeech/model/denoiser.hpp"

namespace cospeech {

/// Motion frames plus the mel spectrogram of the paired audio (empty without audio).
std::vector<TrainingExample> make_examples(const std::vector<PairedClip>& clips, const MelConfig& mel);

/// Unconditional DDIM sample from the expert.
Tensor generate_unconditional(const DenoiserModel& expert, const NoiseSchedule& schedule, const SamplerConfig& sampler,
                              int frames);
/// Guided DDIM sample: guidance * controlnet + (1 - guidance) * expert at every step.
Tensor generate_conditional(const DenoiserModel& expert, const ControlNetModel& cnet, const Tensor& mel,
                            const NoiseSchedule& schedule, const SamplerConfig& sampler, int frames);

/// Per-sample x_T seed.
std::uint64_t sample_seed(std::uint64_t sampler_seed, int index);

struct EvalReport {
    double fgd = 0.0;
    bool fgd_rank_warning = false;
    double ba = 0.0;       // mean over clips that have audio
    double diversity = 0.0;
    int real_count = 0;
    int generated_count = 0;
    int audio_count = 0;
};

/// `audio[i]`, when present, is the track generated clip i is scored against.
EvalReport evaluate(const std::vector<MotionClip>& real, const std::vector<MotionClip>& generated,
                    const std::vector<std::optional<AudioClip>>& audio, const FeatureExtractor& fx, double ba_sigma,
                    int pairs, std::uint64_t seed);

/// Mean BA of each clip against its own audio.
double mean_beat_align(const std::vector<MotionClip>& motion, const std::vector<std::optional<AudioClip>>& audio,
                       double sigma);

std::vector<Tensor> frames_of(const std::vector<MotionClip>& clips);

struct StageLoss {
    int steps = 0;
    double first = 0.0;  // mean of the first `window` step losses
    double last = 0.0;   // mean of the last `window` step losses
    int window = 0;
    double relative_decrease() const { return first > 0.0 ? 1.0 - last / first : 0.0; }
};

/// Smoothing window min(50, max(1, n / 10)).
StageLoss summarize_losses(const std::vector<double>& totals);

struct EndToEndReport {
    std::size_t expert_parameters = 0;
    std::size_t controlnet_trainable_parameters = 0;
    StageLoss pretrain, finetune;
    double extractor_first_loss = 0.0, extractor_last_loss = 0.0;
    EvalReport unconditional;  // expert samples before finetuning
    EvalReport conditional;    // guided samples after finetuning
    double ba_real = 0.0;      // held-out motion against its own audio
    double cond_uncond_max_diff = 0.0;
    std::string expert_hash, controlnet_hash;

    /// Deterministic JSON (no timings).
    std::string to_json() const;
};

using Progress = std::function<void(const std::string& stage, const std::string& message)>;

/// generate -> extractor -> pretrain -> sample (unconditional) -> finetune ->
/// sample (guided) -> eval. Writes everything under cfg.out_dir. A failing stage
/// rethrows with the stage name prefixed and the original error family.
EndToEndReport run_end_to_end(const RunConfig& cfg, const Progress& progress = {});

}  // namespace cospeech
