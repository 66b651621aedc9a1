#include "cospeech/diffusion/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "cospeech/errors.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

NoiseMode parse_noise_mode(const std::string& s) {
    if (s == "vp" || s == "variance_preserving") return NoiseMode::kVariancePreserving;
    if (s == "additive") return NoiseMode::kAdditive;
    throw ConfigError("unknown schedule mode '" + s + "' (expected vp or additive)");
}

std::string to_string(NoiseMode m) { return m == NoiseMode::kAdditive ? "additive" : "vp"; }

double NoiseSchedule::signal_scale(int t) const {
    return mode == NoiseMode::kAdditive ? 1.0 : std::sqrt(alpha_bar.at(static_cast<std::size_t>(t)));
}

NoiseSchedule cosine_schedule(int T, double offset, NoiseMode mode) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    if (!(offset > 0.0 && offset < 1.0)) throw ConfigError("schedule offset must lie in (0, 1)");
    auto f = [&](int t) {
        const double c = std::cos((static_cast<double>(t) / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
        return c * c;
    };
    NoiseSchedule s;
    s.T = T;
    s.offset = offset;
    s.mode = mode;
    s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    s.sigma.resize(static_cast<std::size_t>(T) + 1);
    const double f0 = f(0);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double closed = f(t) / f0;
        const double floor = (1.0 - 0.999) * s.alpha_bar[t - 1];
        s.alpha_bar[t] = closed < floor ? floor : closed;
    }
    for (int t = 0; t <= T; ++t) s.sigma[t] = std::sqrt(1.0 - s.alpha_bar[t]);
    return s;
}

Tensor standard_normal(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Tensor e(rows, cols);
    for (double& v : e.values()) v = rng.normal();
    return e;
}

DiffusionState add_noise(const Tensor& x, int t, const NoiseSchedule& s, std::uint64_t seed) {
    return add_noise(x, t, s, standard_normal(x.rows(), x.cols(), seed));
}

DiffusionState add_noise(const Tensor& x, int t, const NoiseSchedule& s, const Tensor& eps) {
    if (t < 1 || t > s.T) throw InvalidTimestep("t=" + std::to_string(t) + " outside [1, " + std::to_string(s.T) + "]");
    require_same_shape(x, eps, "add_noise");
    const double a = s.signal_scale(t), b = s.sigma[t];
    Tensor xt(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = a * x[i] + b * eps[i];
    return {std::move(xt), t, eps};
}

Tensor predicted_noise(const Tensor& x_t, int t, const Tensor& x0_hat, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw InvalidTimestep("t=" + std::to_string(t));
    require_same_shape(x_t, x0_hat, "predicted_noise");
    const double a = s.signal_scale(t), inv = 1.0 / s.sigma[t];
    Tensor e(x_t.rows(), x_t.cols());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = (x_t[i] - a * x0_hat[i]) * inv;
    return e;
}

Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const Tensor& x0_hat, const NoiseSchedule& s) {
    if (t_prev < 0 || t_prev >= t || t > s.T)
        throw InvalidTimestep("ddim step " + std::to_string(t) + " -> " + std::to_string(t_prev));
    const Tensor eps = predicted_noise(x_t, t, x0_hat, s);
    const double a = s.signal_scale(t_prev), b = s.sigma[t_prev];
    Tensor out(x_t.rows(), x_t.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0_hat[i] + b * eps[i];
    return out;
}

Tensor cfg_combine(const Tensor& d_cond, const Tensor& d_uncond, double s) {
    require_same_shape(d_cond, d_uncond, "cfg_combine");
    Tensor out(d_cond.rows(), d_cond.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = d_cond[i] == d_uncond[i] ? d_cond[i] : s * d_cond[i] + (1.0 - s) * d_uncond[i];
    return out;
}

std::vector<int> ddim_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) throw ConfigError("sampler steps must lie in [1, T]");
    std::vector<int> ts;
    for (int k = steps; k >= 0; --k)
        ts.push_back(static_cast<int>((static_cast<long long>(T) * k) / steps));
    return ts;
}

Tensor sample(const Denoiser& uncond, const Denoiser& cond, int rows, int cols, const SamplerConfig& cfg,
              const NoiseSchedule& s) {
    if (cfg.eta != 0.0) throw ConfigError("only deterministic sampling (eta = 0) is supported");
    if (!uncond) throw ConfigError("sampler needs an unconditional denoiser");
    const auto ts = ddim_timesteps(s.T, cfg.steps);
    Tensor x = standard_normal(rows, cols, cfg.seed);
    if (s.mode == NoiseMode::kAdditive) x *= s.sigma[s.T];
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const int t = ts[k];
        Tensor x0 = cond ? cfg_combine(cond(x, t), uncond(x, t), cfg.guidance) : uncond(x, t);
        x = ddim_step(x, t, ts[k + 1], x0, s);
    }
    return x;
}

}  // namespace cospeech
