#include "cospeech/parameters.hpp"

#include <stdexcept>

namespace cospeech {

void Parameter::accumulate_grad(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
    } else {
        grad += g;
    }
}

void Parameter::zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
}

int ParameterSet::add(std::string name, int rows, int cols) {
    if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    const int idx = static_cast<int>(params_.size());
    by_name_.emplace(name, idx);
    params_.push_back(Parameter{std::move(name), Tensor(rows, cols), {}});
    return idx;
}

int ParameterSet::index_of(std::string_view name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return it->second;
}

bool ParameterSet::contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }

std::size_t ParameterSet::element_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

bool ParameterSet::all_finite() const noexcept {
    for (const auto& p : params_)
        if (!p.value.all_finite()) return false;
    return true;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value))
            return false;
    }
    return true;
}

}  // namespace cospeech
