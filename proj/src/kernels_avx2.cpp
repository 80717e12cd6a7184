// Compiled with -mavx2 -mfma -mpopcnt; only reached through the dispatch table
// after a CPU feature check.

#include "kernels_impl.hpp"

#include <immintrin.h>

namespace nnd::kernels::detail {

namespace {

// Two output rows by sixteen columns held in registers.
inline void gemm_nn_tile_2x16(const double* a0, const double* a1, const double* b, double* c0, double* c1,
                              std::size_t k, std::size_t n, bool accumulate) {
    __m256d r00, r01, r02, r03, r10, r11, r12, r13;
    if (accumulate) {
        r00 = _mm256_loadu_pd(c0);
        r01 = _mm256_loadu_pd(c0 + 4);
        r02 = _mm256_loadu_pd(c0 + 8);
        r03 = _mm256_loadu_pd(c0 + 12);
        r10 = _mm256_loadu_pd(c1);
        r11 = _mm256_loadu_pd(c1 + 4);
        r12 = _mm256_loadu_pd(c1 + 8);
        r13 = _mm256_loadu_pd(c1 + 12);
    } else {
        r00 = r01 = r02 = r03 = r10 = r11 = r12 = r13 = _mm256_setzero_pd();
    }
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        const __m256d b2 = _mm256_loadu_pd(brow + 8);
        const __m256d b3 = _mm256_loadu_pd(brow + 12);
        const __m256d x0 = _mm256_broadcast_sd(a0 + p);
        const __m256d x1 = _mm256_broadcast_sd(a1 + p);
        r00 = _mm256_fmadd_pd(x0, b0, r00);
        r01 = _mm256_fmadd_pd(x0, b1, r01);
        r02 = _mm256_fmadd_pd(x0, b2, r02);
        r03 = _mm256_fmadd_pd(x0, b3, r03);
        r10 = _mm256_fmadd_pd(x1, b0, r10);
        r11 = _mm256_fmadd_pd(x1, b1, r11);
        r12 = _mm256_fmadd_pd(x1, b2, r12);
        r13 = _mm256_fmadd_pd(x1, b3, r13);
    }
    _mm256_storeu_pd(c0, r00);
    _mm256_storeu_pd(c0 + 4, r01);
    _mm256_storeu_pd(c0 + 8, r02);
    _mm256_storeu_pd(c0 + 12, r03);
    _mm256_storeu_pd(c1, r10);
    _mm256_storeu_pd(c1 + 4, r11);
    _mm256_storeu_pd(c1 + 8, r12);
    _mm256_storeu_pd(c1 + 12, r13);
}

// One output row, columns [j, n): 4-wide blocks then scalar tail.
inline void gemm_nn_row_tail(const double* arow, const double* b, double* crow, std::size_t k, std::size_t n,
                             std::size_t j, bool accumulate) {
    for (; j + 4 <= n; j += 4) {
        __m256d r = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
        for (std::size_t p = 0; p < k; ++p) {
            r = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * n + j), r);
        }
        _mm256_storeu_pd(crow + j, r);
    }
    for (; j < n; ++j) {
        double r = accumulate ? crow[j] : 0.0;
        for (std::size_t p = 0; p < k; ++p) r = __builtin_fma(arow[p], b[p * n + j], r);
        crow[j] = r;
    }
}

inline __m256d polevl2(__m256d z, double c0, double c1, double c2) {
    return _mm256_fmadd_pd(_mm256_fmadd_pd(_mm256_set1_pd(c0), z, _mm256_set1_pd(c1)), z, _mm256_set1_pd(c2));
}

// exp for 0 <= x <= 44: Cody-Waite reduction by ln 2 and a (2,3) Pade form on
// the remainder, relative error ~2e-16.
inline __m256d exp_nonneg(__m256d x) {
    const __m256d n = _mm256_round_pd(_mm256_fmadd_pd(x, _mm256_set1_pd(1.4426950408889634074), _mm256_set1_pd(0.5)),
                                      _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
    r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), r);
    const __m256d rr = _mm256_mul_pd(r, r);
    const __m256d p = _mm256_mul_pd(
        r, polevl2(rr, 1.26177193074810590878E-4, 3.02994407707441961300E-2, 9.99999999999999999910E-1));
    __m256d q = _mm256_fmadd_pd(_mm256_set1_pd(3.00198505138664455042E-6), rr, _mm256_set1_pd(2.52448340349684104192E-3));
    q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766E-1));
    q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009E0));
    const __m256d e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), _mm256_div_pd(p, _mm256_sub_pd(q, p)), _mm256_set1_pd(1.0));
    __m256i bits = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
    bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

// tanh with relative error within a few ulp: rational form below 0.625,
// 1 - 2 / (exp(2|x|) + 1) above. NaN propagates.
inline __m256d tanh4(__m256d x) {
    const __m256d sign = _mm256_set1_pd(-0.0);
    const __m256d a = _mm256_andnot_pd(sign, x);
    const __m256d z = _mm256_mul_pd(x, x);
    const __m256d p = polevl2(z, -9.64399179425052238628E-1, -9.92877231001918586564E1, -1.61468768441708447952E3);
    __m256d q = _mm256_add_pd(z, _mm256_set1_pd(1.12811678491632931402E2));
    q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(2.23548839060100448583E3));
    q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(4.84406305325125486048E3));
    const __m256d small = _mm256_fmadd_pd(x, _mm256_div_pd(_mm256_mul_pd(z, p), q), x);

    const __m256d capped = _mm256_min_pd(_mm256_set1_pd(22.0), a);  // NaN in a survives
    const __m256d e = exp_nonneg(_mm256_add_pd(capped, capped));
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d big = _mm256_sub_pd(one, _mm256_div_pd(_mm256_set1_pd(2.0), _mm256_add_pd(e, one)));
    const __m256d big_signed = _mm256_or_pd(big, _mm256_and_pd(sign, x));
    return _mm256_blendv_pd(big_signed, small, _mm256_cmp_pd(a, _mm256_set1_pd(0.625), _CMP_LT_OQ));
}

inline int popcount32(std::uint32_t v) { return __builtin_popcount(v); }

} // namespace

void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                  bool accumulate) {
    const std::size_t n16 = n - n % 16;
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        for (std::size_t j = 0; j < n16; j += 16) gemm_nn_tile_2x16(a0, a1, b + j, c0 + j, c1 + j, k, n, accumulate);
        gemm_nn_row_tail(a0, b, c0, k, n, n16, accumulate);
        gemm_nn_row_tail(a1, b, c1, k, n, n16, accumulate);
    }
    if (i < m) gemm_nn_row_tail(a + i * k, b, c + i * n, k, n, 0, accumulate);
}

void gemm_tn_acc_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d r0 = _mm256_loadu_pd(crow + j);
            __m256d r1 = _mm256_loadu_pd(crow + j + 4);
            __m256d r2 = _mm256_loadu_pd(crow + j + 8);
            __m256d r3 = _mm256_loadu_pd(crow + j + 12);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d x = _mm256_broadcast_sd(a + p * m + i);
                const double* brow = b + p * n + j;
                r0 = _mm256_fmadd_pd(x, _mm256_loadu_pd(brow), r0);
                r1 = _mm256_fmadd_pd(x, _mm256_loadu_pd(brow + 4), r1);
                r2 = _mm256_fmadd_pd(x, _mm256_loadu_pd(brow + 8), r2);
                r3 = _mm256_fmadd_pd(x, _mm256_loadu_pd(brow + 12), r3);
            }
            _mm256_storeu_pd(crow + j, r0);
            _mm256_storeu_pd(crow + j + 4, r1);
            _mm256_storeu_pd(crow + j + 8, r2);
            _mm256_storeu_pd(crow + j + 12, r3);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d r = _mm256_loadu_pd(crow + j);
            for (std::size_t p = 0; p < k; ++p) {
                r = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p * m + i), _mm256_loadu_pd(b + p * n + j), r);
            }
            _mm256_storeu_pd(crow + j, r);
        }
        for (; j < n; ++j) {
            double r = crow[j];
            for (std::size_t p = 0; p < k; ++p) r = __builtin_fma(a[p * m + i], b[p * n + j], r);
            crow[j] = r;
        }
    }
}

// Per 32-pixel chunk the set bits come from one byte compare; the column sums
// follow from popcounts against the bit-position patterns
//   sum j   = sum_k 2^k     popcount(bits & P_k)
//   sum j^2 = sum_{k,l} 2^(k+l) popcount(bits & P_k & P_l)
void bias_tanh_avx2(double* x, const double* bias, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = x + r * cols;
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            _mm256_storeu_pd(row + c, tanh4(_mm256_add_pd(_mm256_loadu_pd(row + c), _mm256_loadu_pd(bias + c))));
        }
        if (c < cols) {
            alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
            for (std::size_t j = c; j < cols; ++j) buf[j - c] = row[j] + bias[j];
            _mm256_store_pd(buf, tanh4(_mm256_load_pd(buf)));
            for (std::size_t j = c; j < cols; ++j) row[j] = buf[j - c];
        }
    }
}

MaskMoments mask_moments_avx2(const std::uint8_t* mask, std::size_t width, std::size_t height) {
    constexpr std::uint32_t kPattern[5] = {0xAAAAAAAAu, 0xCCCCCCCCu, 0xF0F0F0F0u, 0xFF00FF00u, 0xFFFF0000u};
    const __m256i zero = _mm256_setzero_si256();
    MaskMoments m;
    for (std::size_t row = 0; row < height; ++row) {
        const std::uint8_t* line = mask + row * width;
        std::int64_t n = 0, s1 = 0, s2 = 0;
        std::size_t col = 0;
        for (; col + 32 <= width; col += 32) {
            const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(line + col));
            const auto bits = ~static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(v, zero)));
            if (bits == 0) continue;
            const std::int64_t cnt = popcount32(bits);
            std::int64_t sj = 0, sjj = 0;
            for (int p = 0; p < 5; ++p) {
                const std::uint32_t bp = bits & kPattern[p];
                sj += static_cast<std::int64_t>(popcount32(bp)) << p;
                sjj += static_cast<std::int64_t>(popcount32(bp)) << (2 * p);
                for (int q = p + 1; q < 5; ++q) {
                    sjj += static_cast<std::int64_t>(popcount32(bp & kPattern[q])) << (p + q + 1);
                }
            }
            const auto base = static_cast<std::int64_t>(col);
            n += cnt;
            s1 += base * cnt + sj;
            s2 += base * base * cnt + 2 * base * sj + sjj;
        }
        for (; col < width; ++col) {
            if (line[col] != 0) {
                const auto c = static_cast<std::int64_t>(col);
                ++n;
                s1 += c;
                s2 += c * c;
            }
        }
        const auto r = static_cast<std::int64_t>(row);
        m.m00 += n;
        m.m10 += s1;
        m.m01 += r * n;
        m.m20 += s2;
        m.m11 += r * s1;
        m.m02 += r * r * n;
    }
    return m;
}

} // namespace nnd::kernels::detail
