#include <doctest.h>

#include <array>

#include "cospeech/errors.hpp"
#include "test_util.hpp"

using namespace cospeech;
using namespace cospeech::ag;
using testutil::op_grad_error;
using testutil::random_tensor;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("elementwise and broadcast ops have exact gradients") {
    Rng rng(1);
    auto a = random_tensor(rng, 4, 5), b = random_tensor(rng, 4, 5);
    auto row = random_tensor(rng, 1, 5), col = random_tensor(rng, 4, 1);
    CHECK(op_grad_error([](auto& v) { return add(v[0], v[1]); }, {a, b}) < kTol);
    CHECK(op_grad_error([](auto& v) { return sub(v[0], v[1]); }, {a, b}) < kTol);
    CHECK(op_grad_error([](auto& v) { return mul(v[0], v[1]); }, {a, b}) < kTol);
    CHECK(op_grad_error([](auto& v) { return affine(v[0], -2.5, 0.3); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return add_row(v[0], v[1]); }, {a, row}) < kTol);
    CHECK(op_grad_error([](auto& v) { return mul_row(v[0], v[1]); }, {a, row}) < kTol);
    CHECK(op_grad_error([](auto& v) { return mul_col(v[0], v[1]); }, {a, col}) < kTol);
    CHECK(op_grad_error([](auto& v) { return broadcast_rows(v[0], 3); }, {row}) < kTol);
}

TEST_CASE("matmul gradient") {
    Rng rng(2);
    CHECK(op_grad_error([](auto& v) { return matmul(v[0], v[1]); }, {random_tensor(rng, 5, 7), random_tensor(rng, 7, 9)}) <
          kTol);
}

TEST_CASE("nonlinearities and normalizations") {
    Rng rng(3);
    auto a = random_tensor(rng, 6, 5);
    CHECK(op_grad_error([](auto& v) { return gelu(v[0]); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return silu(v[0]); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return layer_norm(v[0]); }, {a}) < 1e-5);
    CHECK(op_grad_error([](auto& v) { return instance_norm(v[0]); }, {a}) < 1e-5);
    CHECK(op_grad_error([](auto& v) { return softmax_rows(v[0]); }, {a}) < kTol);
}

TEST_CASE("structural ops") {
    Rng rng(4);
    auto a = random_tensor(rng, 7, 6);
    const std::array<int, 3> cols{4, 0, 4};
    CHECK(op_grad_error([](auto& v) { return col_slice(v[0], 2, 3); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return row_slice(v[0], 1, 4); }, {a}) < kTol);
    CHECK(op_grad_error([&](auto& v) { return select_cols(v[0], cols); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return mean_rows(v[0]); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return row_diff(v[0]); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return mean_square(v[0]); }, {a}) < kTol);
    Tensor mask(7, 6);
    for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1.0;
    CHECK(op_grad_error([&](auto& v) { return masked_mean_square(v[0], mask); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return im2col(v[0], 3, 1); }, {a}) < kTol);
    CHECK(op_grad_error([](auto& v) { return im2col(v[0], 5, 2); }, {a}) < kTol);
}

TEST_CASE("attention gradient, self and cross") {
    Rng rng(5);
    auto q = random_tensor(rng, 5, 8), k = random_tensor(rng, 6, 8), v = random_tensor(rng, 6, 8);
    CHECK(op_grad_error([](auto& x) { return attention(x[0], x[1], x[2], 2); }, {q, k, v}) < 1e-5);
    CHECK(op_grad_error([](auto& x) { return attention(x[0], x[0], x[0], 4); }, {q}) < 1e-5);
}

TEST_CASE("attention rows are convex combinations of value rows") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto q = random_tensor(rng, 4, 6, 2.0), k = random_tensor(rng, 5, 6, 2.0), v = random_tensor(rng, 5, 6);
        for (int h = 0; h < 2; ++h) {
            Tensor p = attention_weights(q, k, 2, h);
            for (int i = 0; i < p.rows(); ++i) {
                double s = 0.0;
                for (double x : p.row(i)) {
                    CHECK(x >= 0.0);
                    s += x;
                }
                CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
        Graph g(false);
        Tensor out = attention(g.constant(q), g.constant(k), g.constant(v), 2).value();
        for (int i = 0; i < out.rows(); ++i)
            for (int c = 0; c < out.cols(); ++c) {
                double lo = v(0, c), hi = v(0, c);
                for (int r = 1; r < v.rows(); ++r) {
                    lo = std::min(lo, v(r, c));
                    hi = std::max(hi, v(r, c));
                }
                CHECK(out(i, c) >= lo - 1e-12);
                CHECK(out(i, c) <= hi + 1e-12);
            }
    }
}

TEST_CASE("parameter leaves accumulate into Parameter::grad") {
    ParameterSet set;
    const int w = set.add("w", 2, 2);
    set.at(w).value = Tensor(2, 2, {1, 2, 3, 4});
    for (int pass = 0; pass < 2; ++pass) {
        Graph g;
        ParamBinder bind(g, set, true);
        Var x = g.constant(Tensor(1, 2, {1.0, -1.0}));
        g.backward(mean_square(matmul(x, bind(w))));
    }
    // loss = ((1-3)^2 + (2-4)^2)/2 ; dL/dW = x^T * (out)  -> twice (two passes)
    const Tensor& grad = set.at(w).grad;
    CHECK(grad(0, 0) == doctest::Approx(-4.0));
    CHECK(grad(1, 0) == doctest::Approx(4.0));
    CHECK(grad(0, 1) == doctest::Approx(-4.0));
    CHECK(grad(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("frozen binders and non-recording graphs produce no gradients") {
    ParameterSet set;
    const int w = set.add("w", 2, 2);
    set.at(w).value.fill(1.0);
    {
        Graph g;
        ParamBinder bind(g, set, false);
        Var loss = mean_square(matmul(g.constant(Tensor(1, 2, 1.0)), bind(w)));
        CHECK_FALSE(loss.requires_grad());
        g.backward(loss);
    }
    {
        Graph g(false);
        ParamBinder bind(g, set, true);
        g.backward(mean_square(bind(w)));
    }
    CHECK(set.at(w).grad.empty());
}

TEST_CASE("shape errors") {
    Graph g(false);
    CHECK_THROWS_AS(matmul(g.constant(Tensor(2, 3)), g.constant(Tensor(2, 3))), ShapeMismatch);
    CHECK_THROWS_AS(add(g.constant(Tensor(2, 3)), g.constant(Tensor(3, 2))), ShapeMismatch);
    CHECK_THROWS_AS(row_diff(g.constant(Tensor(1, 3))), TooShort);
    CHECK_THROWS_AS(im2col(g.constant(Tensor(4, 3)), 4, 1), ShapeMismatch);
}
