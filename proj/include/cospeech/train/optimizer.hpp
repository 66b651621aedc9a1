#pragma once

#include <filesystem>
#include <vector>

#include "cospeech/parameters.hpp"

namespace cospeech {

struct AdamWConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam moments with decoupled weight decay: p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
/// Parameters without an accumulated gradient are treated as having a zero gradient.
class AdamW {
public:
    AdamW(AdamWConfig cfg, std::vector<ParameterSet*> groups);

    void step();
    void zero_grad();
    long long steps() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return cfg_; }
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

    /// Moments and step count as a CKPT1 file, for resuming.
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    AdamWConfig cfg_;
    std::vector<ParameterSet*> groups_;
    std::vector<std::vector<Tensor>> m_, v_;
    long long t_ = 0;
};

}  // namespace cospeech
