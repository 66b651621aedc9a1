#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/model/denoiser.hpp"
#include "test_util.hpp"

using namespace cospeech;

namespace {

DenoiserConfig tiny() { return {2, 32, 2, 16, 4, 258, 150}; }

std::size_t hand_count(const DenoiserConfig& c) {
    const std::size_t d = c.d_model, in = c.inner(), ff = c.ff_multiplier * d, x = c.input_dim;
    const std::size_t per_layer = (d * 6 * d + 6 * d) + 3 * (d * in + in) + (in * d + d) + (d * ff + ff) + (ff * d + d);
    return (x * d + d) + c.max_frames * d + 2 * (d * d + d) + c.n_layers * per_layer + (d * 2 * d + 2 * d) + (d * x + x);
}

double op_norm(const Tensor& w) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(w.data(), w.rows(),
                                                                                                 w.cols());
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

TEST_CASE("parameter count matches the hand count") {
    auto m = build_denoiser(tiny(), 1);
    CHECK(m.parameter_count() == hand_count(tiny()));
    CHECK(denoiser_parameter_count(tiny()) == hand_count(tiny()));
    const DenoiserConfig base{25, 512, 8, 128, 4, 258, 150};
    CHECK(denoiser_parameter_count(base) == hand_count(base));
    MESSAGE("Base-shaped config parameter count: " << denoiser_parameter_count(base));
}

TEST_CASE("initialization is seeded and follows the scheme") {
    auto a = build_denoiser(tiny(), 3), b = build_denoiser(tiny(), 3), c = build_denoiser(tiny(), 4);
    CHECK(a.params == b.params);
    CHECK_FALSE(a.params == c.params);
    for (const auto& p : a.params) {
        if (p.name.find("mod.") != std::string::npos || p.name.ends_with(".b") || p.name.ends_with(".b1") ||
            p.name.ends_with(".b2")) {
            CHECK(sum_squares(p.value) == 0.0);
        } else {
            const double var = sum_squares(p.value) / static_cast<double>(p.value.size());
            const bool scaled = p.name.ends_with("o.w") || p.name.ends_with("f2.w");
            const double expect = scaled ? 0.02 * 0.02 / 4.0 : 0.02 * 0.02;
            CHECK(var == doctest::Approx(expect).epsilon(0.15));
        }
    }
}

TEST_CASE("sinusoidal timestep embedding") {
    Tensor e0 = sinusoidal_embedding(0, 16);
    for (int i = 0; i < 8; ++i) {
        CHECK(e0(0, 2 * i) == 0.0);
        CHECK(e0(0, 2 * i + 1) == 1.0);
    }
    for (int t = 1; t <= 1000; ++t) {
        REQUIRE(max_abs_diff(sinusoidal_embedding(t, 16), sinusoidal_embedding(t - 1, 16)) > 1e-6);
        REQUIRE(std::sqrt(sum_squares(sinusoidal_embedding(t, 16))) == doctest::Approx(std::sqrt(8.0)));
    }
}

TEST_CASE("timestep embedding respects its norm bound") {
    Rng rng(41);
    auto m = build_denoiser(tiny(), 5);
    for (auto& p : m.params) {
        if (p.name.starts_with("t.")) for (double& v : p.value.values()) v = rng.normal() * 0.5;
    }
    const auto& x = m.index;
    const double bound = op_norm(m.params.at(x.t_w2).value) *
                             (op_norm(m.params.at(x.t_w1).value) * std::sqrt(16.0) +
                              std::sqrt(sum_squares(m.params.at(x.t_b1).value))) +
                         std::sqrt(sum_squares(m.params.at(x.t_b2).value));
    for (int t : {0, 1, 17, 500, 1000}) {
        Tensor e = timestep_embed(m, t);
        CHECK(e.all_finite());
        CHECK(std::sqrt(sum_squares(e)) <= bound);
    }
}

TEST_CASE("denoise shapes, determinism and errors") {
    Rng rng(42);
    auto m = build_denoiser(tiny(), 6);
    for (int n : {1, 7, 150}) {
        Tensor x = testutil::random_tensor(rng, n, 258);
        Tensor y = denoise(m, x, 500);
        CHECK(y.rows() == n);
        CHECK(y.cols() == 258);
        CHECK(y == denoise(m, x, 500));
    }
    CHECK_THROWS_AS(denoise(m, Tensor(151, 258), 1), ShapeMismatch);
    CHECK_THROWS_AS(denoise(m, Tensor(10, 257), 1), ShapeMismatch);
}

TEST_CASE("output is invariant to t while the modulation is zero") {
    Rng rng(43);
    auto m = build_denoiser(tiny(), 7);
    for (auto& p : m.params)
        if (!p.name.ends_with("mod.w") && !p.name.ends_with("mod.b"))
            for (double& v : p.value.values()) v += 0.05 * rng.normal();
    Tensor x = testutil::random_tensor(rng, 20, 258);
    Tensor ref = denoise(m, x, 1);
    for (int t : {2, 250, 999, 1000}) CHECK(max_abs_diff(denoise(m, x, t), ref) <= 1e-6);

    m.params.at(m.index.blocks[0].mod_w).value(0, 2 * 32) = 0.5;
    CHECK(max_abs_diff(denoise(m, x, 900), ref) > 1e-6);
}

TEST_CASE("identical frames without positional encoding give identical rows") {
    Rng rng(44);
    auto m = build_denoiser(tiny(), 8);
    for (auto& p : m.params) for (double& v : p.value.values()) v += 0.05 * rng.normal();
    m.params.at(m.index.pos).value.fill(0.0);
    Tensor x = testutil::random_tensor(rng, 9, 258);
    for (int c = 0; c < 258; ++c) x(7, c) = x(2, c);
    Tensor y = denoise(m, x, 300);
    for (int c = 0; c < 258; ++c) CHECK(std::abs(y(7, c) - y(2, c)) <= 1e-12);
}

TEST_CASE("hidden features per layer") {
    auto m = build_denoiser(tiny(), 9);
    ag::Graph g(false);
    ag::ParamBinder bind(g, m.params);
    auto out = denoise(bind, m, g.constant(Tensor(12, 258, 0.1)), 10);
    REQUIRE(out.hidden.size() == 2);
    CHECK(out.hidden[1].rows() == 12);
    CHECK(out.hidden[1].cols() == 32);
}

TEST_CASE("CKPT1 denoiser round trip and validation") {
    Rng rng(45);
    auto m = build_denoiser(tiny(), 10);
    const auto path = std::filesystem::temp_directory_path() / "cospeech_test_den.ckpt";
    const auto h = save_denoiser(path, m);
    std::uint64_t h2 = 0;
    auto back = load_denoiser(path, &h2);
    CHECK(h == h2);
    CHECK(back.config == m.config);
    for (int i = 0; i < m.params.size(); ++i)
        CHECK(max_abs_diff(back.params.at(i).value, m.params.at(i).value) < 1e-7);
    Tensor x = testutil::random_tensor(rng, 5, 258);
    CHECK(max_abs_diff(denoise(back, x, 77), denoise(m, x, 77)) < 1e-5);
    CHECK(save_denoiser(path, back) == h);

    // A config that disagrees with the stored shapes must be rejected.
    std::string bytes = io::read_file(path);
    bytes.replace(bytes.find("d_model=32"), 10, "d_model=34");
    io::write_file(path, bytes);
    CHECK_THROWS_AS(load_denoiser(path), FormatError);
    std::filesystem::remove(path);
}
