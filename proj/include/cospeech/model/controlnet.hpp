#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cospeech/audio/encoder.hpp"
#include "cospeech/model/denoiser.hpp"

namespace cospeech {

/// Per-layer mixing block handles inside ControlNetModel::params.
struct MoGEBlock {
    int q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;  // cross-attention
    int adain_w, adain_b;                        // audio summary -> (scale, shift)
    int router_w, router_b;                      // [d x 2], [1 x 2]
    int zero_w;                                  // [d x d], starts at zero
};

inline constexpr double kRouterBiasInit = 1.0;

struct ControlNetModel {
    DenoiserModel copy;   // trainable copy of the expert
    ParameterSet params;  // mixing blocks and audio encoder
    std::vector<MoGEBlock> blocks;
    AudioEncoder encoder;
    std::uint64_t expert_hash = 0;

    const DenoiserConfig& config() const { return copy.config; }
};

/// Copies the expert's weights into the trainable copy and adds fresh
/// mixing blocks: zero projections at 0, router bias (+1, -1).
ControlNetModel build_controlnet(const DenoiserModel& expert, const AudioEncoderConfig& audio, std::uint64_t seed,
                                 std::uint64_t expert_hash = 0);

/// Binders for the three parameter groups of a forward pass.
struct ControlNetBinders {
    ag::ParamBinder& frozen;
    ag::ParamBinder& copy;
    ag::ParamBinder& moge;
};

/// Q from audio rows, K and V from motion rows, then the output projection.
ag::Var cross_attend(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& f_a, const ag::Var& f_x);
/// instance_norm over time, then (1 + scale) x + shift from the [1 x d] summary.
ag::Var adain(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& features, const ag::Var& summary);
/// [N x 1] router weight of the frozen branch.
ag::Var router_weight(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& guidance);
/// R * f_x' + (1 - R) * (f_x' + f_train Z).
ag::Var route_blend(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& frozen_branch,
                    const ag::Var& f_train, const ag::Var& guidance);

/// Encoder output aligned to `frames` rows.
ag::Var audio_features(ag::ParamBinder& moge, const ControlNetModel& c, const ag::Var& mel, int frames);

/// Frozen expert and trainable copy in lockstep; each mixing block rewrites
/// the expert stream; the expert's head produces the output.
ag::Var controlnet_denoise(ControlNetBinders& b, const DenoiserModel& frozen, const ControlNetModel& c, const ag::Var& x_t,
                           int t, const ag::Var& f_a);
Tensor controlnet_denoise(const DenoiserModel& frozen, const ControlNetModel& c, const Tensor& x_t, int t,
                          const Tensor& f_a);

/// Inference helper: mel -> aligned audio features.
Tensor audio_features(const ControlNetModel& c, const Tensor& mel, int frames);

/// The stored expert_hash links the file to one expert checkpoint payload.
std::uint64_t save_controlnet(const std::filesystem::path& path, const ControlNetModel& c);
/// Throws FormatError when the stored expert hash differs from `expert_hash`.
ControlNetModel load_controlnet(const std::filesystem::path& path, std::uint64_t expert_hash);

}  // namespace cospeech
