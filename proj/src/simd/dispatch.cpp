#include <atomic>
#include <stdexcept>

#include "cospeech/simd/kernels.hpp"

namespace cospeech::simd {
namespace {

bool cpu_has_avx2() {
#if defined(COSPEECH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect() { return cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar; }

std::atomic<const KernelTable*>& active_table() {
    static std::atomic<const KernelTable*> table{&kernels_for(detect())};
    return table;
}

}  // namespace

bool backend_available(Backend backend) {
    switch (backend) {
        case Backend::kScalar: return true;
        case Backend::kAvx2: return cpu_has_avx2();
    }
    return false;
}

const KernelTable& kernels_for(Backend backend) {
    switch (backend) {
        case Backend::kScalar: return scalar_kernels();
        case Backend::kAvx2:
#if defined(COSPEECH_HAVE_AVX2)
            return avx2_kernels();
#else
            break;
#endif
    }
    throw std::invalid_argument("kernel backend not compiled in");
}

std::string_view backend_name(Backend backend) {
    return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

Backend active_backend() {
#if defined(COSPEECH_HAVE_AVX2)
    if (active_table().load() == &avx2_kernels()) return Backend::kAvx2;
#endif
    return Backend::kScalar;
}

void select_backend(Backend backend) {
    if (!backend_available(backend))
        throw std::invalid_argument("kernel backend unavailable: " + std::string(backend_name(backend)));
    active_table().store(&kernels_for(backend));
}

const KernelTable& kernels() { return *active_table().load(std::memory_order_relaxed); }

}  // namespace cospeech::simd
