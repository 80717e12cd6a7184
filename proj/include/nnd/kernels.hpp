#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// on x86-64, an AVX2/FMA version; the table is picked once at startup from
// the CPU features (override with NND_SIMD=scalar|avx2).
//
// The signatures take raw pointers so that the AVX2 translation unit does not
// instantiate any inline library code under different target flags.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace nnd::kernels {

enum class Isa { Scalar, Avx2 };

/// Raw image moments of a binary mask over pixel-center coordinates
/// (col, row). Exact integer sums.
struct MaskMoments {
    std::int64_t m00 = 0;
    std::int64_t m10 = 0;  // sum col
    std::int64_t m01 = 0;  // sum row
    std::int64_t m20 = 0;  // sum col^2
    std::int64_t m11 = 0;  // sum col*row
    std::int64_t m02 = 0;  // sum row^2
    bool operator==(const MaskMoments&) const = default;
};

struct KernelTable {
    Isa isa;
    std::string_view name;

    // c[m x n] = a[m x k] * b[k x n]   (c += ... when accumulate)
    void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate);
    // c[m x n] += a[k x m]^T * b[k x n]
    void (*gemm_tn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
    // x[r, c] = tanh(x[r, c] + bias[c]) over a rows x cols block.
    void (*bias_tanh)(double* x, const double* bias, std::size_t rows, std::size_t cols);
    // Nonzero bytes count as set pixels.
    MaskMoments (*mask_moments)(const std::uint8_t* mask, std::size_t width, std::size_t height);
};

const KernelTable& scalar();
/// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2();
const KernelTable& active();

} // namespace nnd::kernels
