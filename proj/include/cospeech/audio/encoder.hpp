#pragma once

#include <vector>

#include "cospeech/audio/audio.hpp"
#include "cospeech/autograd.hpp"
#include "cospeech/parameters.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

struct AudioEncoderConfig {
    int n_mels = 80;
    int channels = 64;
    int kernel = 5;
    std::vector<int> dilations = {1, 2, 4};
    int d_model = 64;
};

/// Trainable stand-in for a pretrained speech encoder: per-band
/// standardization over time, dilated temporal convolutions with GELU, and a
/// linear projection to d_model. Parameters live in a caller-owned set.
struct AudioEncoder {
    AudioEncoderConfig config;
    std::vector<int> conv_w, conv_b;
    int proj_w = -1, proj_b = -1;

    /// Registers "<prefix>conv<i>.w/.b" and "<prefix>proj.w/.b" in `params`.
    static AudioEncoder build(ParameterSet& params, const AudioEncoderConfig& cfg, Rng& rng,
                              const std::string& prefix = "audio.");
    /// Rebinds to an existing set that already holds the named tensors.
    static AudioEncoder attach(const ParameterSet& params, const AudioEncoderConfig& cfg,
                               const std::string& prefix = "audio.");

    /// [T_a x n_mels] -> [T_a x d_model]
    ag::Var forward(ag::ParamBinder& bind, const ag::Var& mel) const;
};

/// Inference helper over a fixed parameter set.
Tensor encode_audio(const AudioEncoder& enc, ParameterSet& params, const MelSpectrogram& mel);

/// Differentiable alignment onto motion frames.
ag::Var align_to_motion(const ag::Var& emb, int motion_frames);

}  // namespace cospeech
