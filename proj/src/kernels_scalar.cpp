#include "kernels_impl.hpp"

#include <cmath>

namespace nnd::kernels::detail {

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_tn_acc_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void bias_tanh_scalar(double* x, const double* bias, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = x + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] = std::tanh(row[c] + bias[c]);
    }
}

MaskMoments mask_moments_scalar(const std::uint8_t* mask, std::size_t width, std::size_t height) {
    MaskMoments m;
    for (std::size_t row = 0; row < height; ++row) {
        const std::uint8_t* line = mask + row * width;
        std::int64_t n = 0, s1 = 0, s2 = 0;
        for (std::size_t col = 0; col < width; ++col) {
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
