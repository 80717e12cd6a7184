#include "nnd/kernels.hpp"

#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace nnd::kernels {

namespace {

const KernelTable kScalar{Isa::Scalar, "scalar", &detail::gemm_nn_scalar, &detail::gemm_tn_acc_scalar, &detail::bias_tanh_scalar,
                          &detail::mask_moments_scalar};

#if defined(NND_HAVE_AVX2)
const KernelTable kAvx2{Isa::Avx2, "avx2", &detail::gemm_nn_avx2, &detail::gemm_tn_acc_avx2, &detail::bias_tanh_avx2,
                        &detail::mask_moments_avx2};

bool cpu_has_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") && __builtin_cpu_supports("popcnt");
}
#endif

const KernelTable& select() {
    const char* env = std::getenv("NND_SIMD");
    const std::string want = env ? env : "auto";
    if (want == "scalar") return kScalar;
    if (const KernelTable* t = avx2()) return *t;
    return kScalar;
}

} // namespace

const KernelTable& scalar() { return kScalar; }

const KernelTable* avx2() {
#if defined(NND_HAVE_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? &kAvx2 : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

} // namespace nnd::kernels
