#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cospeech/tensor.hpp"

namespace cospeech {

enum class NoiseMode { kVariancePreserving, kAdditive };

NoiseMode parse_noise_mode(const std::string& s);  // "vp" | "additive"
std::string to_string(NoiseMode m);

struct NoiseSchedule {
    int T = 1000;
    double offset = 0.008;
    NoiseMode mode = NoiseMode::kVariancePreserving;
    std::vector<double> alpha_bar;  // [T+1], alpha_bar[0] = 1
    std::vector<double> sigma;      // sqrt(1 - alpha_bar)

    double signal_scale(int t) const;  // sqrt(alpha_bar) (vp) or 1 (additive)
};

/// alpha_bar[t] = f(t)/f(0), f(t) = cos^2(((t/T + offset)/(1 + offset)) pi/2); steps whose
/// beta would exceed 0.999 are capped at that value.
NoiseSchedule cosine_schedule(int T = 1000, double offset = 0.008,
                              NoiseMode mode = NoiseMode::kVariancePreserving);

struct DiffusionState {
    Tensor x_t;
    int t = 0;
    Tensor eps;
};

/// Draws eps ~ N(0, I) from `seed`. Throws InvalidTimestep outside [1, T].
DiffusionState add_noise(const Tensor& x, int t, const NoiseSchedule& s, std::uint64_t seed);
DiffusionState add_noise(const Tensor& x, int t, const NoiseSchedule& s, const Tensor& eps);

Tensor standard_normal(int rows, int cols, std::uint64_t seed);

/// Deterministic x0-parameterized DDIM update from t to t_prev < t.
Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const Tensor& x0_hat, const NoiseSchedule& s);
/// The eps implied by (x_t, x0_hat) at t.
Tensor predicted_noise(const Tensor& x_t, int t, const Tensor& x0_hat, const NoiseSchedule& s);

/// s * d_cond + (1 - s) * d_uncond
Tensor cfg_combine(const Tensor& d_cond, const Tensor& d_uncond, double s);

struct SamplerConfig {
    int steps = 25;
    double guidance = 4.0;
    double eta = 0.0;
    std::uint64_t seed = 0;
};

/// floor(T k / steps) for k = steps .. 0, strictly decreasing, first T and last 0.
std::vector<int> ddim_timesteps(int T, int steps);

/// Predicts clean motion from (x_t, t).
using Denoiser = std::function<Tensor(const Tensor& x_t, int t)>;

/// Deterministic DDIM from x_T. With a conditional denoiser each step uses
/// cfg_combine(cond, uncond, guidance); otherwise uncond alone.
Tensor sample(const Denoiser& uncond, const Denoiser& cond, int rows, int cols, const SamplerConfig& cfg,
              const NoiseSchedule& s);

}  // namespace cospeech
