#pragma once

// Tape-based reverse-mode differentiation over 2-D tensors.
//
// A Graph records every node that depends on a trainable leaf. Graph::backward
// walks the tape in reverse and finally adds leaf gradients into the bound
// Parameter::grad buffers. A non-recording graph evaluates the same ops with
// no tape, which is how inference paths run.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cospeech/parameters.hpp"
#include "cospeech/tensor.hpp"

namespace cospeech::ag {

struct Node {
    Tensor value;
    const Tensor* external = nullptr;  // leaves may alias parameter storage
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Node&)> backward;

    const Tensor& val() const { return external ? *external : value; }
    Tensor& grad_buffer();
    void accumulate(const Tensor& g);
};

class Graph;

class Var {
public:
    Var() = default;
    const Tensor& value() const { return node_->val(); }
    int rows() const { return node_->val().rows(); }
    int cols() const { return node_->val().cols(); }
    bool requires_grad() const { return node_->requires_grad; }
    /// Gradient after Graph::backward; empty when nothing reached this node.
    const Tensor& grad() const { return node_->grad; }
    Graph& graph() const { return *graph_; }
    const std::shared_ptr<Node>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    friend class Graph;
    Var(std::shared_ptr<Node> node, Graph* graph) : node_(std::move(node)), graph_(graph) {}
    std::shared_ptr<Node> node_;
    Graph* graph_ = nullptr;
};

class Graph {
public:
    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }

    Var constant(Tensor t);
    /// Non-owning constant; `t` must outlive the graph.
    Var constant_ref(const Tensor& t);
    /// Trainable leaf bound to `p`; gradients land in p.grad on backward().
    Var param(Parameter& p);
    /// Differentiable leaf not bound to any parameter (gradient readable via Var::grad).
    Var input(Tensor t);

    /// Builds an op output. `backward` is kept only if some input needs a gradient.
    Var make(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward);

    /// `loss` must be 1x1.
    void backward(const Var& loss);

private:
    bool record_;
    std::vector<std::shared_ptr<Node>> tape_;
};

/// Caches one leaf per parameter for the lifetime of a graph. Frozen binders
/// expose parameters as constants so no gradient reaches them.
class ParamBinder {
public:
    ParamBinder(Graph& graph, ParameterSet& params, bool trainable);
    /// Frozen binder over read-only parameters.
    ParamBinder(Graph& graph, const ParameterSet& params);
    Var operator()(int index);
    Graph& graph() const { return graph_; }
    bool trainable() const { return trainable_; }

private:
    Graph& graph_;
    ParameterSet* mutable_;
    const ParameterSet& params_;
    bool trainable_;
    std::vector<Var> cache_;
};

// ---- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// alpha * a + beta
Var affine(const Var& a, double alpha, double beta = 0.0);
/// a[m x n] + row[1 x n] broadcast over rows
Var add_row(const Var& a, const Var& row);
/// a[m x n] * row[1 x n] broadcast over rows
Var mul_row(const Var& a, const Var& row);
/// a[m x n] * col[m x 1] broadcast over columns
Var mul_col(const Var& a, const Var& col);
/// row[1 x n] repeated m times
Var broadcast_rows(const Var& row, int m);

Var gelu(const Var& a);
Var silu(const Var& a);
/// Normalizes each row to zero mean and unit variance (no affine terms).
Var layer_norm(const Var& a, double eps = 1e-6);
/// Normalizes each column over the rows; the variance is floored at `var_floor`.
Var instance_norm(const Var& a, double var_floor = 1e-5);
Var softmax_rows(const Var& a);

Var col_slice(const Var& a, int start, int count);
Var row_slice(const Var& a, int start, int count);
Var select_cols(const Var& a, std::span<const int> cols);
/// [1 x n] mean over rows
Var mean_rows(const Var& a);
/// [(m-1) x n] forward differences along rows
Var row_diff(const Var& a);
/// [1 x 1] mean of squared entries
Var mean_square(const Var& a);
/// [1 x 1] sum(mask * a^2) / sum(mask); zero when the mask is empty
Var masked_mean_square(const Var& a, const Tensor& mask);
/// Same-padded temporal unfolding for an odd `kernel`: [T x C] -> [T x kernel*C]
Var im2col(const Var& a, int kernel, int dilation);

/// Multi-head scaled dot-product attention. q is [N x H*dh], k and v are
/// [M x H*dh]; the scale is 1/sqrt(dh). Returns [N x H*dh].
Var attention(const Var& q, const Var& k, const Var& v, int heads);

/// Row-softmax attention weights of one head, for inspection and tests.
Tensor attention_weights(const Tensor& q, const Tensor& k, int heads, int head);

}  // namespace cospeech::ag
