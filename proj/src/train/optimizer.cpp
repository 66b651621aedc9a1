#include "cospeech/train/optimizer.hpp"

#include <cmath>

#include "cospeech/errors.hpp"
#include "cospeech/model/checkpoint.hpp"

namespace cospeech {

AdamW::AdamW(AdamWConfig cfg, std::vector<ParameterSet*> groups) : cfg_(cfg), groups_(std::move(groups)) {
    if (!(cfg_.learning_rate >= 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) ||
        !(cfg_.eps > 0.0) || !(cfg_.weight_decay >= 0.0))
        throw ConfigError("invalid optimizer hyperparameters");
    for (ParameterSet* g : groups_) {
        m_.emplace_back();
        v_.emplace_back();
        for (const auto& p : *g) {
            m_.back().emplace_back(p.value.rows(), p.value.cols());
            v_.back().emplace_back(p.value.rows(), p.value.cols());
        }
    }
}

void AdamW::step() {
    ++t_;
    const double lr = cfg_.learning_rate, b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double decay = 1.0 - lr * cfg_.weight_decay;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        int pi = 0;
        for (auto& p : *groups_[gi]) {
            Tensor& m = m_[gi][static_cast<std::size_t>(pi)];
            Tensor& v = v_[gi][static_cast<std::size_t>(pi)];
            ++pi;
            const bool has_grad = !p.grad.empty();
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = has_grad ? p.grad[i] : 0.0;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p.value[i] = p.value[i] * decay - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
            }
        }
    }
}

void AdamW::zero_grad() {
    for (ParameterSet* g : groups_) g->zero_grad();
}

void AdamW::save(const std::filesystem::path& path) const {
    ParameterSet state;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        int pi = 0;
        for (const auto& p : *groups_[gi]) {
            const std::string key = "g" + std::to_string(gi) + "." + p.name;
            state.at(state.add("m." + key, p.value.rows(), p.value.cols())).value = m_[gi][static_cast<std::size_t>(pi)];
            state.at(state.add("v." + key, p.value.rows(), p.value.cols())).value = v_[gi][static_cast<std::size_t>(pi)];
            ++pi;
        }
    }
    save_checkpoint(path, {{"kind", "adamw"}, {"step", std::to_string(t_)}}, state);
}

void AdamW::load(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.get("kind") != "adamw") throw FormatError(path.string() + " is not optimizer state");
    const std::string& step = ck.get("step");
    t_ = std::stoll(step);
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        int pi = 0;
        for (const auto& p : *groups_[gi]) {
            const std::string key = "g" + std::to_string(gi) + "." + p.name;
            for (auto [prefix, store] : {std::pair{"m.", &m_}, std::pair{"v.", &v_}}) {
                const auto& src = ck.params.at(ck.params.index_of(prefix + key)).value;
                if (!src.same_shape(p.value)) throw FormatError("optimizer state shape mismatch for " + p.name);
                (*store)[gi][static_cast<std::size_t>(pi)] = src;
            }
            ++pi;
        }
    }
}

}  // namespace cospeech
