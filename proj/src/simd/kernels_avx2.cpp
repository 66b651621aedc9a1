// AVX2 + FMA kernels. Compiled with -mavx2 -mfma; only reached through the
// dispatcher after CPUID confirms support.

#include <immintrin.h>

#include "cospeech/simd/kernels.hpp"

namespace cospeech::simd {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Register-blocked 4x8 micro-kernel shared by NN and TN products. `a_at(i, p)`
// returns A(i, p) in the logical (already transposed) orientation.
template <typename AAt>
inline void gemm_blocked(int m, int n, int k, AAt a_at, const double* b, int ldb, double* c,
                         int ldc) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        double* c0 = c + static_cast<std::ptrdiff_t>(i) * ldc;
        double* c1 = c0 + ldc;
        double* c2 = c1 + ldc;
        double* c3 = c2 + ldc;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc00 = _mm256_setzero_pd(), acc01 = _mm256_setzero_pd();
            __m256d acc10 = _mm256_setzero_pd(), acc11 = _mm256_setzero_pd();
            __m256d acc20 = _mm256_setzero_pd(), acc21 = _mm256_setzero_pd();
            __m256d acc30 = _mm256_setzero_pd(), acc31 = _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
                const __m256d b0 = _mm256_loadu_pd(brow);
                const __m256d b1 = _mm256_loadu_pd(brow + 4);
                __m256d av = _mm256_broadcast_sd(&a_at(i, p));
                acc00 = _mm256_fmadd_pd(av, b0, acc00);
                acc01 = _mm256_fmadd_pd(av, b1, acc01);
                av = _mm256_broadcast_sd(&a_at(i + 1, p));
                acc10 = _mm256_fmadd_pd(av, b0, acc10);
                acc11 = _mm256_fmadd_pd(av, b1, acc11);
                av = _mm256_broadcast_sd(&a_at(i + 2, p));
                acc20 = _mm256_fmadd_pd(av, b0, acc20);
                acc21 = _mm256_fmadd_pd(av, b1, acc21);
                av = _mm256_broadcast_sd(&a_at(i + 3, p));
                acc30 = _mm256_fmadd_pd(av, b0, acc30);
                acc31 = _mm256_fmadd_pd(av, b1, acc31);
            }
            _mm256_storeu_pd(c0 + j, _mm256_add_pd(_mm256_loadu_pd(c0 + j), acc00));
            _mm256_storeu_pd(c0 + j + 4, _mm256_add_pd(_mm256_loadu_pd(c0 + j + 4), acc01));
            _mm256_storeu_pd(c1 + j, _mm256_add_pd(_mm256_loadu_pd(c1 + j), acc10));
            _mm256_storeu_pd(c1 + j + 4, _mm256_add_pd(_mm256_loadu_pd(c1 + j + 4), acc11));
            _mm256_storeu_pd(c2 + j, _mm256_add_pd(_mm256_loadu_pd(c2 + j), acc20));
            _mm256_storeu_pd(c2 + j + 4, _mm256_add_pd(_mm256_loadu_pd(c2 + j + 4), acc21));
            _mm256_storeu_pd(c3 + j, _mm256_add_pd(_mm256_loadu_pd(c3 + j), acc30));
            _mm256_storeu_pd(c3 + j + 4, _mm256_add_pd(_mm256_loadu_pd(c3 + j + 4), acc31));
        }
        for (; j + 4 <= n; j += 4) {
            __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
            __m256d acc2 = _mm256_setzero_pd(), acc3 = _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + static_cast<std::ptrdiff_t>(p) * ldb + j);
                acc0 = _mm256_fmadd_pd(_mm256_broadcast_sd(&a_at(i, p)), b0, acc0);
                acc1 = _mm256_fmadd_pd(_mm256_broadcast_sd(&a_at(i + 1, p)), b0, acc1);
                acc2 = _mm256_fmadd_pd(_mm256_broadcast_sd(&a_at(i + 2, p)), b0, acc2);
                acc3 = _mm256_fmadd_pd(_mm256_broadcast_sd(&a_at(i + 3, p)), b0, acc3);
            }
            _mm256_storeu_pd(c0 + j, _mm256_add_pd(_mm256_loadu_pd(c0 + j), acc0));
            _mm256_storeu_pd(c1 + j, _mm256_add_pd(_mm256_loadu_pd(c1 + j), acc1));
            _mm256_storeu_pd(c2 + j, _mm256_add_pd(_mm256_loadu_pd(c2 + j), acc2));
            _mm256_storeu_pd(c3 + j, _mm256_add_pd(_mm256_loadu_pd(c3 + j), acc3));
        }
        for (; j < n; ++j) {
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (int p = 0; p < k; ++p) {
                const double bv = b[static_cast<std::ptrdiff_t>(p) * ldb + j];
                s0 += a_at(i, p) * bv;
                s1 += a_at(i + 1, p) * bv;
                s2 += a_at(i + 2, p) * bv;
                s3 += a_at(i + 3, p) * bv;
            }
            c0[j] += s0;
            c1[j] += s1;
            c2[j] += s2;
            c3[j] += s3;
        }
    }
    for (; i < m; ++i) {
        double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
                const __m256d av = _mm256_broadcast_sd(&a_at(i, p));
                acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), acc0);
                acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), acc1);
            }
            _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), acc0));
            _mm256_storeu_pd(crow + j + 4, _mm256_add_pd(_mm256_loadu_pd(crow + j + 4), acc1));
        }
        for (; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a_at(i, p) * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
            crow[j] += s;
        }
    }
}

double dot(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
    auto a_at = [a, lda](int i, int p) -> const double& {
        return a[static_cast<std::ptrdiff_t>(i) * lda + p];
    };
    gemm_blocked(m, n, k, a_at, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
    auto a_at = [a, lda](int i, int p) -> const double& {
        return a[static_cast<std::ptrdiff_t>(p) * lda + i];
    };
    gemm_blocked(m, n, k, a_at, b, ldb, c, ldc);
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
        double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        int j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + static_cast<std::ptrdiff_t>(j) * ldb;
            const double* b1 = b0 + ldb;
            const double* b2 = b1 + ldb;
            const double* b3 = b2 + ldb;
            __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                const __m256d av = _mm256_loadu_pd(arow + p);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
            }
            double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
            for (; p < k; ++p) {
                r0 += arow[p] * b0[p];
                r1 += arow[p] * b1[p];
                r2 += arow[p] * b2[p];
                r3 += arow[p] * b3[p];
            }
            crow[j] += r0;
            crow[j + 1] += r1;
            crow[j + 2] += r2;
            crow[j + 3] += r3;
        }
        for (; j < n; ++j) crow[j] += dot(arow, b + static_cast<std::ptrdiff_t>(j) * ldb, k);
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable& avx2_kernels() {
    static const KernelTable table{gemm_nn, gemm_nt, gemm_tn, dot, axpy, mul};
    return table;
}

}  // namespace cospeech::simd
