#pragma once

#include "nnd/kernels.hpp"

namespace nnd::kernels::detail {

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate);
void gemm_tn_acc_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void bias_tanh_scalar(double* x, const double* bias, std::size_t rows, std::size_t cols);
MaskMoments mask_moments_scalar(const std::uint8_t* mask, std::size_t width, std::size_t height);

#if defined(NND_HAVE_AVX2)
void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                  bool accumulate);
void gemm_tn_acc_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void bias_tanh_avx2(double* x, const double* bias, std::size_t rows, std::size_t cols);
MaskMoments mask_moments_avx2(const std::uint8_t* mask, std::size_t width, std::size_t height);
#endif

} // namespace nnd::kernels::detail
