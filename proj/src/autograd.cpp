#include "cospeech/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cospeech/errors.hpp"
#include "cospeech/simd/kernels.hpp"

namespace cospeech::ag {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(val().rows(), val().cols());
    return grad;
}

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
    } else {
        grad += g;
    }
}

Var Graph::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(std::move(n), this);
}

Var Graph::constant_ref(const Tensor& t) {
    auto n = std::make_shared<Node>();
    n->external = &t;
    return Var(std::move(n), this);
}

Var Graph::param(Parameter& p) {
    auto n = std::make_shared<Node>();
    n->external = &p.value;
    if (record_) {
        n->requires_grad = true;
        n->param = &p;
        tape_.push_back(n);
    }
    return Var(std::move(n), this);
}

Var Graph::input(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    if (record_) {
        n->requires_grad = true;
        tape_.push_back(n);
    }
    return Var(std::move(n), this);
}

Var Graph::make(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    if (record_)
        for (const Var& v : inputs) needs = needs || v.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->backward = std::move(backward);
        tape_.push_back(n);
    }
    return Var(std::move(n), this);
}

void Graph::backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw ShapeMismatch("backward expects a 1x1 loss");
    if (!loss.requires_grad()) return;
    loss.node()->grad = Tensor(1, 1, 1.0);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node& n = **it;
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n);
    }
    for (const auto& n : tape_)
        if (n->param && !n->grad.empty()) n->param->accumulate_grad(n->grad);
}

ParamBinder::ParamBinder(Graph& graph, ParameterSet& params, bool trainable)
    : graph_(graph), mutable_(&params), params_(params), trainable_(trainable),
      cache_(static_cast<std::size_t>(params.size())) {}

ParamBinder::ParamBinder(Graph& graph, const ParameterSet& params)
    : graph_(graph), mutable_(nullptr), params_(params), trainable_(false),
      cache_(static_cast<std::size_t>(params.size())) {}

Var ParamBinder::operator()(int index) {
    Var& slot = cache_.at(static_cast<std::size_t>(index));
    if (!slot) slot = trainable_ ? graph_.param(mutable_->at(index)) : graph_.constant_ref(params_.at(index).value);
    return slot;
}

// ---------------------------------------------------------------------------

namespace {

using NodePtr = std::shared_ptr<Node>;

const simd::KernelTable& kt() { return simd::kernels(); }

void check_same(const Var& a, const Var& b, const char* op) { require_same_shape(a.value(), b.value(), op); }

std::string dims(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) throw ShapeMismatch("matmul " + dims(av) + " * " + dims(bv));
    Tensor out = cospeech::matmul(av, bv);
    NodePtr an = a.node(), bn = b.node();
    return a.graph().make(std::move(out), {a, b}, [an, bn](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& A = an->val();
        const Tensor& B = bn->val();
        const int m = A.rows(), k = A.cols(), n = B.cols();
        if (m == 0 || k == 0 || n == 0) return;
        if (an->requires_grad)
            kt().gemm_nt(m, k, n, g.data(), n, B.data(), n, an->grad_buffer().data(), k);
        if (bn->requires_grad)
            kt().gemm_tn(k, n, m, A.data(), k, g.data(), n, bn->grad_buffer().data(), n);
    });
}

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor out = a.value();
    out += b.value();
    NodePtr an = a.node(), bn = b.node();
    return a.graph().make(std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) bn->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor out = a.value();
    out -= b.value();
    NodePtr an = a.node(), bn = b.node();
    return a.graph().make(std::move(out), {a, b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) kt().axpy(-1.0, self.grad.data(), bn->grad_buffer().data(), self.grad.size());
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor out(a.rows(), a.cols());
    kt().mul(a.value().data(), b.value().data(), out.data(), out.size());
    NodePtr an = a.node(), bn = b.node();
    return a.graph().make(std::move(out), {a, b}, [an, bn](Node& self) {
        const std::size_t n = self.grad.size();
        Tensor tmp(self.grad.rows(), self.grad.cols());
        if (an->requires_grad) {
            kt().mul(self.grad.data(), bn->val().data(), tmp.data(), n);
            an->accumulate(tmp);
        }
        if (bn->requires_grad) {
            kt().mul(self.grad.data(), an->val().data(), tmp.data(), n);
            bn->accumulate(tmp);
        }
    });
}

Var affine(const Var& a, double alpha, double beta) {
    Tensor out = a.value();
    for (double& v : out.values()) v = alpha * v + beta;
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an, alpha](Node& self) {
        kt().axpy(alpha, self.grad.data(), an->grad_buffer().data(), self.grad.size());
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw ShapeMismatch("add_row " + dims(a.value()) + " + " + dims(row.value()));
    Tensor out = a.value();
    const Tensor& r = row.value();
    for (int i = 0; i < out.rows(); ++i) kt().axpy(1.0, r.data(), out.row(i).data(), r.size());
    NodePtr an = a.node(), rn = row.node();
    return a.graph().make(std::move(out), {a, row}, [an, rn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (rn->requires_grad) {
            Tensor& rg = rn->grad_buffer();
            for (int i = 0; i < self.grad.rows(); ++i)
                kt().axpy(1.0, self.grad.row(i).data(), rg.data(), rg.size());
        }
    });
}

Var mul_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw ShapeMismatch("mul_row " + dims(a.value()) + " * " + dims(row.value()));
    const Tensor& av = a.value();
    const Tensor& r = row.value();
    Tensor out(av.rows(), av.cols());
    for (int i = 0; i < av.rows(); ++i) kt().mul(av.row(i).data(), r.data(), out.row(i).data(), r.size());
    NodePtr an = a.node(), rn = row.node();
    return a.graph().make(std::move(out), {a, row}, [an, rn](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& A = an->val();
        const Tensor& R = rn->val();
        const std::size_t n = R.size();
        std::vector<double> tmp(n);
        if (an->requires_grad) {
            Tensor& ag = an->grad_buffer();
            for (int i = 0; i < g.rows(); ++i) {
                kt().mul(g.row(i).data(), R.data(), tmp.data(), n);
                kt().axpy(1.0, tmp.data(), ag.row(i).data(), n);
            }
        }
        if (rn->requires_grad) {
            Tensor& rg = rn->grad_buffer();
            for (int i = 0; i < g.rows(); ++i) {
                kt().mul(g.row(i).data(), A.row(i).data(), tmp.data(), n);
                kt().axpy(1.0, tmp.data(), rg.data(), n);
            }
        }
    });
}

Var mul_col(const Var& a, const Var& col) {
    if (col.cols() != 1 || col.rows() != a.rows())
        throw ShapeMismatch("mul_col " + dims(a.value()) + " * " + dims(col.value()));
    const Tensor& av = a.value();
    const Tensor& c = col.value();
    Tensor out = av;
    for (int i = 0; i < out.rows(); ++i)
        for (double& v : out.row(i)) v *= c[static_cast<std::size_t>(i)];
    NodePtr an = a.node(), cn = col.node();
    return a.graph().make(std::move(out), {a, col}, [an, cn](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& A = an->val();
        const Tensor& C = cn->val();
        const std::size_t n = static_cast<std::size_t>(g.cols());
        if (an->requires_grad) {
            Tensor& ag = an->grad_buffer();
            for (int i = 0; i < g.rows(); ++i)
                kt().axpy(C[static_cast<std::size_t>(i)], g.row(i).data(), ag.row(i).data(), n);
        }
        if (cn->requires_grad) {
            Tensor& cg = cn->grad_buffer();
            for (int i = 0; i < g.rows(); ++i)
                cg[static_cast<std::size_t>(i)] += kt().dot(g.row(i).data(), A.row(i).data(), n);
        }
    });
}

Var broadcast_rows(const Var& row, int m) {
    if (row.rows() != 1) throw ShapeMismatch("broadcast_rows expects a single row, got " + dims(row.value()));
    Tensor out(m, row.cols());
    for (int i = 0; i < m; ++i) std::copy(row.value().data(), row.value().data() + row.cols(), out.row(i).data());
    NodePtr rn = row.node();
    return row.graph().make(std::move(out), {row}, [rn](Node& self) {
        Tensor& rg = rn->grad_buffer();
        for (int i = 0; i < self.grad.rows(); ++i) kt().axpy(1.0, self.grad.row(i).data(), rg.data(), rg.size());
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
    Tensor out = a.value();
    for (double& x : out.values()) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        x = 0.5 * x * (1.0 + std::tanh(u));
    }
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an](Node& self) {
        const Tensor& x = an->val();
        Tensor& ag = an->grad_buffer();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double xv = x[i];
            const double t = std::tanh(kGeluC * (xv + kGeluA * xv * xv * xv));
            const double d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * xv * xv);
            ag[i] += self.grad[i] * d;
        }
    });
}

Var silu(const Var& a) {
    Tensor out = a.value();
    for (double& x : out.values()) x = x / (1.0 + std::exp(-x));
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an](Node& self) {
        const Tensor& x = an->val();
        Tensor& ag = an->grad_buffer();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-x[i]));
            ag[i] += self.grad[i] * (s + x[i] * s * (1.0 - s));
        }
    });
}

Var layer_norm(const Var& a, double eps) {
    const Tensor& x = a.value();
    const int m = x.rows(), n = x.cols();
    Tensor y(m, n);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        auto xr = x.row(i);
        double mean = 0.0;
        for (double v : xr) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : xr) var += (v - mean) * (v - mean);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(i)] = is;
        auto yr = y.row(i);
        for (int j = 0; j < n; ++j) yr[static_cast<std::size_t>(j)] = (xr[static_cast<std::size_t>(j)] - mean) * is;
    }
    NodePtr an = a.node();
    return a.graph().make(std::move(y), {a}, [an, inv_std](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& Y = self.value;
        Tensor& ag = an->grad_buffer();
        const int n = g.cols();
        for (int i = 0; i < g.rows(); ++i) {
            auto gr = g.row(i);
            auto yr = Y.row(i);
            double mg = 0.0, mgy = 0.0;
            for (int j = 0; j < n; ++j) {
                mg += gr[static_cast<std::size_t>(j)];
                mgy += gr[static_cast<std::size_t>(j)] * yr[static_cast<std::size_t>(j)];
            }
            mg /= n;
            mgy /= n;
            const double is = (*inv_std)[static_cast<std::size_t>(i)];
            auto out = ag.row(i);
            for (int j = 0; j < n; ++j) {
                const auto jj = static_cast<std::size_t>(j);
                out[jj] += is * (gr[jj] - mg - yr[jj] * mgy);
            }
        }
    });
}

Var instance_norm(const Var& a, double var_floor) {
    const Tensor& x = a.value();
    const int m = x.rows(), n = x.cols();
    if (m < 1) throw ShapeMismatch("instance_norm on empty sequence");
    Tensor y(m, n);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    auto floored = std::make_shared<std::vector<char>>(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        double mean = 0.0;
        for (int i = 0; i < m; ++i) mean += x(i, j);
        mean /= m;
        double var = 0.0;
        for (int i = 0; i < m; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
        var /= m;
        const bool fl = var < var_floor;
        const double is = 1.0 / std::sqrt(fl ? var_floor : var);
        (*inv_std)[static_cast<std::size_t>(j)] = is;
        (*floored)[static_cast<std::size_t>(j)] = fl;
        for (int i = 0; i < m; ++i) y(i, j) = (x(i, j) - mean) * is;
    }
    NodePtr an = a.node();
    return a.graph().make(std::move(y), {a}, [an, inv_std, floored](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& Y = self.value;
        Tensor& ag = an->grad_buffer();
        const int m = g.rows();
        for (int j = 0; j < g.cols(); ++j) {
            double mg = 0.0, mgy = 0.0;
            for (int i = 0; i < m; ++i) {
                mg += g(i, j);
                mgy += g(i, j) * Y(i, j);
            }
            mg /= m;
            mgy /= m;
            const double is = (*inv_std)[static_cast<std::size_t>(j)];
            const bool fl = (*floored)[static_cast<std::size_t>(j)] != 0;
            for (int i = 0; i < m; ++i) ag(i, j) += is * (g(i, j) - mg - (fl ? 0.0 : Y(i, j) * mgy));
        }
    });
}

namespace {
void softmax_inplace(std::span<double> r) {
    double mx = r[0];
    for (double v : r) mx = std::max(mx, v);
    double s = 0.0;
    for (double& v : r) {
        v = std::exp(v - mx);
        s += v;
    }
    const double inv = 1.0 / s;
    for (double& v : r) v *= inv;
}
}  // namespace

Var softmax_rows(const Var& a) {
    Tensor y = a.value();
    if (y.cols() == 0) throw ShapeMismatch("softmax over empty rows");
    for (int i = 0; i < y.rows(); ++i) softmax_inplace(y.row(i));
    NodePtr an = a.node();
    return a.graph().make(std::move(y), {a}, [an](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& Y = self.value;
        Tensor& ag = an->grad_buffer();
        const std::size_t n = static_cast<std::size_t>(g.cols());
        for (int i = 0; i < g.rows(); ++i) {
            const double s = kt().dot(g.row(i).data(), Y.row(i).data(), n);
            auto out = ag.row(i);
            for (std::size_t j = 0; j < n; ++j) out[j] += Y.row(i)[j] * (g.row(i)[j] - s);
        }
    });
}

Var col_slice(const Var& a, int start, int count) {
    const Tensor& x = a.value();
    if (start < 0 || count < 0 || start + count > x.cols())
        throw ShapeMismatch("col_slice out of range on " + dims(x));
    Tensor out(x.rows(), count);
    for (int i = 0; i < x.rows(); ++i)
        std::copy_n(x.row(i).data() + start, count, out.row(i).data());
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an, start, count](Node& self) {
        Tensor& ag = an->grad_buffer();
        for (int i = 0; i < self.grad.rows(); ++i)
            kt().axpy(1.0, self.grad.row(i).data(), ag.row(i).data() + start, static_cast<std::size_t>(count));
    });
}

Var row_slice(const Var& a, int start, int count) {
    const Tensor& x = a.value();
    if (start < 0 || count < 0 || start + count > x.rows())
        throw ShapeMismatch("row_slice out of range on " + dims(x));
    std::vector<double> vals(x.data() + static_cast<std::ptrdiff_t>(start) * x.cols(),
                             x.data() + static_cast<std::ptrdiff_t>(start + count) * x.cols());
    Tensor out(count, x.cols(), std::move(vals));
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an, start](Node& self) {
        Tensor& ag = an->grad_buffer();
        kt().axpy(1.0, self.grad.data(), ag.row(start).data(), self.grad.size());
    });
}

Var select_cols(const Var& a, std::span<const int> cols) {
    const Tensor& x = a.value();
    for (int c : cols)
        if (c < 0 || c >= x.cols()) throw ShapeMismatch("select_cols index out of range");
    std::vector<int> idx(cols.begin(), cols.end());
    Tensor out(x.rows(), static_cast<int>(idx.size()));
    for (int i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j) out(i, static_cast<int>(j)) = x(i, idx[j]);
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an, idx = std::move(idx)](Node& self) {
        Tensor& ag = an->grad_buffer();
        for (int i = 0; i < self.grad.rows(); ++i)
            for (std::size_t j = 0; j < idx.size(); ++j) ag(i, idx[j]) += self.grad(i, static_cast<int>(j));
    });
}

Var mean_rows(const Var& a) {
    const Tensor& x = a.value();
    if (x.rows() == 0) throw ShapeMismatch("mean_rows of empty tensor");
    Tensor out(1, x.cols());
    for (int i = 0; i < x.rows(); ++i) kt().axpy(1.0, x.row(i).data(), out.data(), out.size());
    out *= 1.0 / x.rows();
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an](Node& self) {
        Tensor& ag = an->grad_buffer();
        const double s = 1.0 / ag.rows();
        for (int i = 0; i < ag.rows(); ++i) kt().axpy(s, self.grad.data(), ag.row(i).data(), self.grad.size());
    });
}

Var row_diff(const Var& a) {
    const Tensor& x = a.value();
    if (x.rows() < 2) throw TooShort("row_diff needs at least two rows");
    Tensor out(x.rows() - 1, x.cols());
    for (int i = 0; i + 1 < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out(i, j) = x(i + 1, j) - x(i, j);
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an](Node& self) {
        Tensor& ag = an->grad_buffer();
        const std::size_t n = static_cast<std::size_t>(ag.cols());
        for (int i = 0; i < self.grad.rows(); ++i) {
            kt().axpy(1.0, self.grad.row(i).data(), ag.row(i + 1).data(), n);
            kt().axpy(-1.0, self.grad.row(i).data(), ag.row(i).data(), n);
        }
    });
}

Var mean_square(const Var& a) {
    const Tensor& x = a.value();
    if (x.size() == 0) throw ShapeMismatch("mean_square of empty tensor");
    Tensor out(1, 1, cospeech::sum_squares(x) / static_cast<double>(x.size()));
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an](Node& self) {
        const Tensor& x = an->val();
        const double s = 2.0 * self.grad[0] / static_cast<double>(x.size());
        kt().axpy(s, x.data(), an->grad_buffer().data(), x.size());
    });
}

Var masked_mean_square(const Var& a, const Tensor& mask) {
    const Tensor& x = a.value();
    require_same_shape(x, mask, "masked_mean_square");
    double count = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        count += mask[i];
        acc += mask[i] * x[i] * x[i];
    }
    Tensor out(1, 1, count > 0.0 ? acc / count : 0.0);
    NodePtr an = a.node();
    auto m = std::make_shared<Tensor>(mask);
    return a.graph().make(std::move(out), {a}, [an, m, count](Node& self) {
        if (count <= 0.0) return;
        const Tensor& x = an->val();
        Tensor& ag = an->grad_buffer();
        const double s = 2.0 * self.grad[0] / count;
        for (std::size_t i = 0; i < x.size(); ++i) ag[i] += s * (*m)[i] * x[i];
    });
}

Var im2col(const Var& a, int kernel, int dilation) {
    if (kernel < 1 || kernel % 2 == 0 || dilation < 1) throw ShapeMismatch("im2col needs odd kernel and dilation >= 1");
    const Tensor& x = a.value();
    const int t_len = x.rows(), c = x.cols(), half = (kernel - 1) / 2;
    Tensor out(t_len, kernel * c);
    for (int t = 0; t < t_len; ++t)
        for (int k = 0; k < kernel; ++k) {
            const int src = t + (k - half) * dilation;
            if (src < 0 || src >= t_len) continue;
            std::copy_n(x.row(src).data(), c, out.row(t).data() + static_cast<std::ptrdiff_t>(k) * c);
        }
    NodePtr an = a.node();
    return a.graph().make(std::move(out), {a}, [an, kernel, dilation, half](Node& self) {
        Tensor& ag = an->grad_buffer();
        const int t_len = ag.rows(), c = ag.cols();
        for (int t = 0; t < t_len; ++t)
            for (int k = 0; k < kernel; ++k) {
                const int src = t + (k - half) * dilation;
                if (src < 0 || src >= t_len) continue;
                kt().axpy(1.0, self.grad.row(t).data() + static_cast<std::ptrdiff_t>(k) * c, ag.row(src).data(),
                          static_cast<std::size_t>(c));
            }
    });
}

namespace {

// P[h] = softmax(Q_h K_h^T * scale) for one head.
Tensor head_weights(const Tensor& q, const Tensor& k, int heads, int head) {
    const int width = q.cols(), dh = width / heads;
    Tensor p(q.rows(), k.rows());
    kt().gemm_nt(q.rows(), k.rows(), dh, q.data() + static_cast<std::ptrdiff_t>(head) * dh, width,
                 k.data() + static_cast<std::ptrdiff_t>(head) * dh, width, p.data(), p.cols());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    p *= scale;
    for (int i = 0; i < p.rows(); ++i) softmax_inplace(p.row(i));
    return p;
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, int heads, int head) {
    if (heads < 1 || q.cols() % heads != 0 || q.cols() != k.cols() || head < 0 || head >= heads)
        throw ShapeMismatch("attention_weights shape");
    return head_weights(q, k, heads, head);
}

Var attention(const Var& q, const Var& k, const Var& v, int heads) {
    const Tensor& Q = q.value();
    const Tensor& K = k.value();
    const Tensor& V = v.value();
    if (heads < 1 || Q.cols() % heads != 0 || K.cols() != Q.cols() || V.cols() != Q.cols() || K.rows() != V.rows() ||
        K.rows() == 0)
        throw ShapeMismatch("attention q " + dims(Q) + " k " + dims(K) + " v " + dims(V));
    const int width = Q.cols(), dh = width / heads, n = Q.rows(), m = K.rows();
    auto probs = std::make_shared<std::vector<Tensor>>();
    probs->reserve(static_cast<std::size_t>(heads));
    Tensor out(n, width);
    for (int h = 0; h < heads; ++h) {
        probs->push_back(head_weights(Q, K, heads, h));
        const Tensor& P = probs->back();
        kt().gemm_nn(n, dh, m, P.data(), m, V.data() + static_cast<std::ptrdiff_t>(h) * dh, width,
                     out.data() + static_cast<std::ptrdiff_t>(h) * dh, width);
    }
    NodePtr qn = q.node(), kn = k.node(), vn = v.node();
    return q.graph().make(std::move(out), {q, k, v}, [qn, kn, vn, probs, heads](Node& self) {
        const Tensor& Q = qn->val();
        const Tensor& K = kn->val();
        const Tensor& V = vn->val();
        const Tensor& G = self.grad;
        const int width = Q.cols(), dh = width / heads, n = Q.rows(), m = K.rows();
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        Tensor dp(n, m);
        for (int h = 0; h < heads; ++h) {
            const Tensor& P = (*probs)[static_cast<std::size_t>(h)];
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(h) * dh;
            if (vn->requires_grad)
                kt().gemm_tn(m, dh, n, P.data(), m, G.data() + off, width, vn->grad_buffer().data() + off, width);
            if (!qn->requires_grad && !kn->requires_grad) continue;
            dp.fill(0.0);
            kt().gemm_nt(n, m, dh, G.data() + off, width, V.data() + off, width, dp.data(), m);
            // dS = P * (dP - rowsum(dP * P)), folded with the temperature.
            for (int i = 0; i < n; ++i) {
                auto pr = P.row(i);
                auto dr = dp.row(i);
                const double s = kt().dot(pr.data(), dr.data(), static_cast<std::size_t>(m));
                for (int j = 0; j < m; ++j) {
                    const auto jj = static_cast<std::size_t>(j);
                    dr[jj] = pr[jj] * (dr[jj] - s) * scale;
                }
            }
            if (qn->requires_grad)
                kt().gemm_nn(n, dh, m, dp.data(), m, K.data() + off, width, qn->grad_buffer().data() + off, width);
            if (kn->requires_grad)
                kt().gemm_tn(m, dh, n, dp.data(), m, Q.data() + off, width, kn->grad_buffer().data() + off, width);
        }
    });
}

}  // namespace cospeech::ag
