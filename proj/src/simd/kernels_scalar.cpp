#include "cospeech/simd/kernels.hpp"

namespace cospeech::simd {
namespace {

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<std::ptrdiff_t>(i) * lda + p];
            const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::ptrdiff_t>(j) * ldb;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            c[static_cast<std::ptrdiff_t>(i) * ldc + j] += s;
        }
    }
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
             int ldc) {
    for (int r = 0; r < k; ++r) {
        const double* arow = a + static_cast<std::ptrdiff_t>(r) * lda;
        const double* brow = b + static_cast<std::ptrdiff_t>(r) * ldb;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{gemm_nn, gemm_nt, gemm_tn, dot, axpy, mul};
    return table;
}

}  // namespace cospeech::simd
