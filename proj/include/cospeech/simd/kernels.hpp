#pragma once

// Dense double-precision kernels behind every matrix product in the library.
//
// Each kernel exists as a scalar reference implementation and an AVX2+FMA
// variant. The variant is chosen once at runtime from CPUID; tests can pin a
// backend to compare the two.

#include <cstddef>
#include <string_view>

namespace cospeech::simd {

enum class Backend { kScalar, kAvx2 };

// All matrices are row-major with explicit leading dimensions. The gemm
// kernels accumulate into C; callers clear C when they want an assignment.
struct KernelTable {
    // C[m x n] += A[m x k] * B[k x n]
    void (*gemm_nn)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc);
    // C[m x n] += A[m x k] * B[n x k]^T
    void (*gemm_nt)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc);
    // C[m x n] += A[k x m]^T * B[k x n]
    void (*gemm_tn)(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc);
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out = x * y (elementwise)
    void (*mul)(const double* x, const double* y, double* out, std::size_t n);
};

const KernelTable& scalar_kernels();
#if defined(COSPEECH_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

bool backend_available(Backend backend);
Backend active_backend();
/// Throws std::invalid_argument when the backend is not supported by this CPU or build.
void select_backend(Backend backend);
const KernelTable& kernels_for(Backend backend);
std::string_view backend_name(Backend backend);

/// Table for the active backend. The first call performs CPU detection.
const KernelTable& kernels();

}  // namespace cospeech::simd
