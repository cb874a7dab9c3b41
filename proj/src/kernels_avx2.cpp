// AVX2 variants of the conv and relu kernels. Compiled with -mavx2 only (no
// -mfma): explicit mul/add intrinsics keep each lane's rounding identical to
// the scalar table, which the equivalence tests check bitwise. Lanes run
// across output columns; reductions keep the stripe layout of striped_dot.

#include "planter/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include "kernels_inline.hpp"

namespace planter::kernels {

namespace {

inline double hsum_stripes(__m256d v) {
    // (p0+p1)+(p2+p3), matching striped_dot's combine
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s01 = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
    const __m128d s23 = _mm_add_sd(hi, _mm_unpackhi_pd(hi, hi));
    return _mm_cvtsd_f64(_mm_add_sd(s01, s23));
}

inline double striped_dot_avx2(const double* a, const double* b, int m) {
    __m256d p = _mm256_setzero_pd();
    int k = 0;
    for (; k + 4 <= m; k += 4)
        p = _mm256_add_pd(p, _mm256_mul_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k)));
    double total = hsum_stripes(p);
    for (; k < m; ++k) total += a[k] * b[k];
    return total;
}

void conv3x3_forward_avx2(const double* in, const double* w, const double* bias, double* out,
                          ConvDims d, int b_begin, int b_end) {
    const std::size_t ch = std::size_t(d.h) * d.w;
    const std::size_t in_img = std::size_t(d.c_in) * ch;
    const std::size_t out_img = std::size_t(d.c_out) * ch;
    for (int b = b_begin; b < b_end; ++b) {
        const double* in_b = in + b * in_img;
        for (int o = 0; o < d.c_out; ++o) {
            const double* w_o = w + std::size_t(o) * d.c_in * 9;
            const __m256d bias_v = _mm256_set1_pd(bias[o]);
            double* out_p = out + b * out_img + o * ch;
            for (int y = 0; y < d.h; ++y) {
                double* out_row = out_p + std::size_t(y) * d.w;
                out_row[0] = detail::conv_pixel(in_b, w_o, bias[o], d.c_in, d.h, d.w, y, 0);
                int x = 1;
                for (; x + 3 <= d.w - 2; x += 4) {  // all lanes interior: no column padding
                    __m256d acc = bias_v;
                    for (int i = 0; i < d.c_in; ++i) {
                        const double* inp = in_b + i * ch;
                        const double* wk = w_o + std::size_t(i) * 9;
                        for (int dy = 0; dy < 3; ++dy) {
                            const int yy = y + dy - 1;
                            if (yy < 0 || yy >= d.h) continue;
                            const double* row = inp + std::size_t(yy) * d.w + (x - 1);
                            acc = _mm256_add_pd(
                                acc, _mm256_mul_pd(_mm256_loadu_pd(row), _mm256_set1_pd(wk[dy * 3])));
                            acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(row + 1),
                                                                   _mm256_set1_pd(wk[dy * 3 + 1])));
                            acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(row + 2),
                                                                   _mm256_set1_pd(wk[dy * 3 + 2])));
                        }
                    }
                    _mm256_storeu_pd(out_row + x, acc);
                }
                for (; x < d.w - 1; ++x)
                    out_row[x] = detail::conv_pixel(in_b, w_o, bias[o], d.c_in, d.h, d.w, y, x);
                if (d.w >= 2)
                    out_row[d.w - 1] =
                        detail::conv_pixel(in_b, w_o, bias[o], d.c_in, d.h, d.w, y, d.w - 1);
            }
        }
    }
}

void conv3x3_grad_data_avx2(const double* dout, const double* w, double* din, ConvDims d,
                            int b_begin, int b_end) {
    const std::size_t ch = std::size_t(d.h) * d.w;
    const std::size_t in_img = std::size_t(d.c_in) * ch;
    const std::size_t out_img = std::size_t(d.c_out) * ch;
    for (int b = b_begin; b < b_end; ++b) {
        const double* dout_b = dout + b * out_img;
        for (int i = 0; i < d.c_in; ++i) {
            double* din_p = din + b * in_img + i * ch;
            for (int y = 0; y < d.h; ++y) {
                double* din_row = din_p + std::size_t(y) * d.w;
                din_row[0] +=
                    detail::grad_data_pixel(dout_b, w, d.c_out, d.c_in, i, d.h, d.w, y, 0);
                int x = 1;
                for (; x + 3 <= d.w - 2; x += 4) {
                    __m256d acc = _mm256_setzero_pd();
                    for (int o = 0; o < d.c_out; ++o) {
                        const double* dop = dout_b + o * ch;
                        const double* wk = w + (std::size_t(o) * d.c_in + i) * 9;
                        for (int dy = 0; dy < 3; ++dy) {
                            const int yy = y - dy + 1;
                            if (yy < 0 || yy >= d.h) continue;
                            const double* row = dop + std::size_t(yy) * d.w + (x + 1);
                            acc = _mm256_add_pd(
                                acc, _mm256_mul_pd(_mm256_loadu_pd(row), _mm256_set1_pd(wk[dy * 3])));
                            acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(row - 1),
                                                                   _mm256_set1_pd(wk[dy * 3 + 1])));
                            acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(row - 2),
                                                                   _mm256_set1_pd(wk[dy * 3 + 2])));
                        }
                    }
                    _mm256_storeu_pd(din_row + x, _mm256_add_pd(_mm256_loadu_pd(din_row + x), acc));
                }
                for (; x < d.w - 1; ++x)
                    din_row[x] +=
                        detail::grad_data_pixel(dout_b, w, d.c_out, d.c_in, i, d.h, d.w, y, x);
                if (d.w >= 2)
                    din_row[d.w - 1] += detail::grad_data_pixel(dout_b, w, d.c_out, d.c_in, i, d.h,
                                                                d.w, y, d.w - 1);
            }
        }
    }
}

void conv3x3_grad_weights_avx2(const double* dout, const double* in, double* dw, double* dbias,
                               ConvDims d, int b_begin, int b_end) {
    detail::conv_grad_weights_loop(dout, in, dw, d, b_begin, b_end, striped_dot_avx2);
    detail::conv_grad_bias(dout, dbias, d, b_begin, b_end);
}

void relu_forward_avx2(const double* in, double* out, std::size_t count) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= count; k += 4)
        _mm256_storeu_pd(out + k, _mm256_max_pd(_mm256_loadu_pd(in + k), zero));
    for (; k < count; ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
}

void relu_backward_avx2(const double* in, const double* dout, double* din, std::size_t count) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= count; k += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(in + k), zero, _CMP_GT_OQ);
        const __m256d pass = _mm256_and_pd(mask, _mm256_loadu_pd(dout + k));
        _mm256_storeu_pd(din + k, _mm256_add_pd(_mm256_loadu_pd(din + k), pass));
    }
    for (; k < count; ++k) din[k] += in[k] > 0.0 ? dout[k] : 0.0;
}

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable table{conv3x3_forward_avx2, conv3x3_grad_data_avx2,
                                   conv3x3_grad_weights_avx2, relu_forward_avx2,
                                   relu_backward_avx2, "avx2"};
    return &table;
}

}  // namespace planter::kernels

#else  // !__AVX2__

namespace planter::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace planter::kernels

#endif
