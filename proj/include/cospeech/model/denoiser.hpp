#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cospeech/autograd.hpp"
#include "cospeech/model/checkpoint.hpp"
#include "cospeech/parameters.hpp"

namespace cospeech {

struct DenoiserConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 4;
    int d_heads = 16;
    int ff_multiplier = 4;
    int input_dim = 258;
    int max_frames = 150;

    int inner() const noexcept { return n_heads * d_heads; }
    /// Throws ConfigError on non-positive fields or an odd d_model.
    void validate() const;
    bool operator==(const DenoiserConfig&) const = default;
};

struct TensorSpec {
    std::string name;
    int rows, cols;
};

/// Every tensor of the model in registration order.
std::vector<TensorSpec> denoiser_tensor_specs(const DenoiserConfig& cfg);
std::size_t denoiser_parameter_count(const DenoiserConfig& cfg);

struct DenoiserBlockIndex {
    int mod_w, mod_b;
    int q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    int f1_w, f1_b, f2_w, f2_b;
};

/// Parameter handles for one denoiser inside a ParameterSet.
struct DenoiserIndex {
    int in_w, in_b, pos;
    int t_w1, t_b1, t_w2, t_b2;
    std::vector<DenoiserBlockIndex> blocks;
    int out_mod_w, out_mod_b, out_w, out_b;

    static DenoiserIndex resolve(const ParameterSet& params, const DenoiserConfig& cfg);
};

/// Transformer over one token per frame with adaptive layer-norm modulation
/// from the timestep. All modulation weights start at zero.
struct DenoiserModel {
    DenoiserConfig config;
    ParameterSet params;
    DenoiserIndex index;

    std::size_t parameter_count() const { return params.element_count(); }
};

/// Normal(0, 0.02) weights; attention-out and second FFN weights use
/// 0.02/sqrt(2 n_layers); biases and modulation weights are zero.
DenoiserModel build_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

/// Interleaved (sin, cos) pairs at frequencies 10000^(-2i/d). Returns [1 x d].
Tensor sinusoidal_embedding(int t, int d);

/// Forward pieces, exposed so a control network can run the expert layer by layer.
namespace denoiser {
/// silu(MLP(sinusoid(t))), the vector every modulation layer reads. [1 x d]
ag::Var timestep_condition(ag::ParamBinder& bind, const DenoiserModel& m, int t);
/// Token projection plus positional embedding. [N x d]
ag::Var embed(ag::ParamBinder& bind, const DenoiserModel& m, const ag::Var& x);
ag::Var block(ag::ParamBinder& bind, const DenoiserModel& m, int layer, const ag::Var& h, const ag::Var& cond);
ag::Var head(ag::ParamBinder& bind, const DenoiserModel& m, const ag::Var& h, const ag::Var& cond);
}  // namespace denoiser

/// TimestepEmbedding: the raw sinusoid passed through the model's MLP. [1 x d]
Tensor timestep_embed(const DenoiserModel& m, int t);

struct DenoiseOutput {
    ag::Var x0;
    std::vector<ag::Var> hidden;  // per-layer block outputs [N x d]
};

/// Throws ShapeMismatch when x_t is not [N x input_dim] with N <= max_frames.
DenoiseOutput denoise(ag::ParamBinder& bind, const DenoiserModel& m, const ag::Var& x_t, int t);
/// Inference convenience.
Tensor denoise(const DenoiserModel& m, const Tensor& x_t, int t);

ConfigPairs denoiser_config_pairs(const DenoiserConfig& cfg);
DenoiserConfig denoiser_config_from(const Checkpoint& ck);

std::uint64_t save_denoiser(const std::filesystem::path& path, const DenoiserModel& m);
/// Verifies every tensor shape against the stored config.
DenoiserModel load_denoiser(const std::filesystem::path& path, std::uint64_t* payload_hash = nullptr);

}  // namespace cospeech
