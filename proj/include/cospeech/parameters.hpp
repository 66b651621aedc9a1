#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cospeech/tensor.hpp"

namespace cospeech {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // allocated on first accumulation

    void accumulate_grad(const Tensor& g);
    void zero_grad();
};

/// Ordered collection of named parameters. Models refer to entries by index,
/// so copying a set (e.g. for a trainable copy) keeps every handle valid.
class ParameterSet {
public:
    int add(std::string name, int rows, int cols);
    Parameter& at(int index) { return params_.at(static_cast<std::size_t>(index)); }
    const Parameter& at(int index) const { return params_.at(static_cast<std::size_t>(index)); }
    /// Throws std::out_of_range for unknown names.
    int index_of(std::string_view name) const;
    bool contains(std::string_view name) const;

    int size() const noexcept { return static_cast<int>(params_.size()); }
    std::size_t element_count() const noexcept;
    void zero_grad();
    bool all_finite() const noexcept;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b);

private:
    std::vector<Parameter> params_;
    std::map<std::string, int, std::less<>> by_name_;
};

bool operator==(const ParameterSet& a, const ParameterSet& b);

}  // namespace cospeech
