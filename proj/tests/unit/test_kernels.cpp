#include <doctest.h>

#include <cmath>
#include <vector>

#include "cospeech/rng.hpp"
#include "cospeech/simd/kernels.hpp"

using namespace cospeech;
using simd::Backend;

namespace {

std::vector<double> randvec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
    return worst;
}

struct Shape {
    int m, n, k;
};

}  // namespace

TEST_CASE("scalar backend is always available") {
    CHECK(simd::backend_available(Backend::kScalar));
    CHECK(simd::backend_name(Backend::kScalar) == "scalar");
}

TEST_CASE("backend selection round-trips") {
    const Backend original = simd::active_backend();
    simd::select_backend(Backend::kScalar);
    CHECK(simd::active_backend() == Backend::kScalar);
    CHECK(&simd::kernels() == &simd::scalar_kernels());
    simd::select_backend(original);
    CHECK(simd::active_backend() == original);
}

#if defined(COSPEECH_HAVE_AVX2)
TEST_CASE("avx2 kernels match the scalar reference") {
    if (!simd::backend_available(Backend::kAvx2)) {
        MESSAGE("CPU lacks AVX2/FMA; equivalence test skipped");
        return;
    }
    const auto& ref = simd::scalar_kernels();
    const auto& vec = simd::avx2_kernels();
    Rng rng(42);

    const Shape shapes[] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 1}, {5, 9, 13}, {17, 33, 20}, {64, 258, 32}, {150, 64, 258}};
    for (const Shape s : shapes) {
        CAPTURE(s.m);
        CAPTURE(s.n);
        CAPTURE(s.k);
        // Padded leading dimensions exercise strided access.
        const int lda = s.k + 3, ldb = s.n + 2, ldc = s.n + 1;
        auto a = randvec(rng, static_cast<std::size_t>(s.m) * lda);
        auto b = randvec(rng, static_cast<std::size_t>(s.k) * ldb);
        auto c0 = randvec(rng, static_cast<std::size_t>(s.m) * ldc);
        auto c1 = c0;
        ref.gemm_nn(s.m, s.n, s.k, a.data(), lda, b.data(), ldb, c0.data(), ldc);
        vec.gemm_nn(s.m, s.n, s.k, a.data(), lda, b.data(), ldb, c1.data(), ldc);
        CHECK(max_rel(c0, c1) < 1e-12);

        // B as [n x k] for the NT product.
        const int ldbt = s.k + 1;
        auto bt = randvec(rng, static_cast<std::size_t>(s.n) * ldbt);
        c1 = c0;
        ref.gemm_nt(s.m, s.n, s.k, a.data(), lda, bt.data(), ldbt, c0.data(), ldc);
        vec.gemm_nt(s.m, s.n, s.k, a.data(), lda, bt.data(), ldbt, c1.data(), ldc);
        CHECK(max_rel(c0, c1) < 1e-12);

        // A as [k x m] for the TN product.
        const int ldat = s.m + 2;
        auto at = randvec(rng, static_cast<std::size_t>(s.k) * ldat);
        c1 = c0;
        ref.gemm_tn(s.m, s.n, s.k, at.data(), ldat, b.data(), ldb, c0.data(), ldc);
        vec.gemm_tn(s.m, s.n, s.k, at.data(), ldat, b.data(), ldb, c1.data(), ldc);
        CHECK(max_rel(c0, c1) < 1e-12);
    }

    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 258u, 1001u}) {
        CAPTURE(n);
        auto x = randvec(rng, n), y = randvec(rng, n);
        CHECK(std::abs(ref.dot(x.data(), y.data(), n) - vec.dot(x.data(), y.data(), n)) < 1e-12 * (1.0 + n));
        auto y0 = y, y1 = y;
        ref.axpy(0.37, x.data(), y0.data(), n);
        vec.axpy(0.37, x.data(), y1.data(), n);
        CHECK(max_rel(y0, y1) < 1e-14);
        std::vector<double> o0(n), o1(n);
        ref.mul(x.data(), y.data(), o0.data(), n);
        vec.mul(x.data(), y.data(), o1.data(), n);
        CHECK(o0 == o1);
    }
}
#endif
