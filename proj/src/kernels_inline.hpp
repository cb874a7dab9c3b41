#pragma once

#include <cstddef>

#include "planter/kernels.hpp"

// Per-element helpers shared by the backend translation units. Edge columns
// and stripe tails run through these in every backend, so the code handling
// them is literally the same.

namespace planter::kernels::detail {

/// One conv output element; taps accumulate in (i, dy, dx) order, out-of-bounds skipped.
inline double conv_pixel(const double* in_img, const double* w_o, double bias, int c_in, int h,
                         int w, int y, int x) {
    double acc = bias;
    const std::size_t ch = std::size_t(h) * w;
    for (int i = 0; i < c_in; ++i) {
        const double* inp = in_img + i * ch;
        const double* wk = w_o + std::size_t(i) * 9;
        for (int dy = 0; dy < 3; ++dy) {
            const int yy = y + dy - 1;
            if (yy < 0 || yy >= h) continue;
            const double* row = inp + std::size_t(yy) * w;
            for (int dx = 0; dx < 3; ++dx) {
                const int xx = x + dx - 1;
                if (xx < 0 || xx >= w) continue;
                acc += row[xx] * wk[dy * 3 + dx];
            }
        }
    }
    return acc;
}

/// One conv input-gradient element; taps accumulate in (o, dy, dx) order.
inline double grad_data_pixel(const double* dout_img, const double* wt, int c_out, int c_in,
                              int i, int h, int w, int y, int x) {
    double acc = 0.0;
    const std::size_t ch = std::size_t(h) * w;
    for (int o = 0; o < c_out; ++o) {
        const double* dop = dout_img + o * ch;
        const double* wk = wt + (std::size_t(o) * c_in + i) * 9;
        for (int dy = 0; dy < 3; ++dy) {
            const int yy = y - dy + 1;
            if (yy < 0 || yy >= h) continue;
            const double* row = dop + std::size_t(yy) * w;
            for (int dx = 0; dx < 3; ++dx) {
                const int xx = x - dx + 1;
                if (xx < 0 || xx >= w) continue;
                acc += row[xx] * wk[dy * 3 + dx];
            }
        }
    }
    return acc;
}

/// 4-stripe dot product: p_j sums elements j, j+4, ...; combined as
/// (p0+p1)+(p2+p3) with the tail appended in order. The AVX2 variant keeps
/// the stripes in vector lanes and must combine identically.
inline double striped_dot(const double* a, const double* b, int m) {
    double p0 = 0, p1 = 0, p2 = 0, p3 = 0;
    int k = 0;
    for (; k + 4 <= m; k += 4) {
        p0 += a[k] * b[k];
        p1 += a[k + 1] * b[k + 1];
        p2 += a[k + 2] * b[k + 2];
        p3 += a[k + 3] * b[k + 3];
    }
    double total = (p0 + p1) + (p2 + p3);
    for (; k < m; ++k) total += a[k] * b[k];
    return total;
}

/// Bias gradient: plain ascending sum over (b, y, x) per output channel.
inline void conv_grad_bias(const double* dout, double* dbias, ConvDims d, int b_begin,
                           int b_end) {
    const std::size_t ch = std::size_t(d.h) * d.w;
    const std::size_t img = std::size_t(d.c_out) * ch;
    for (int o = 0; o < d.c_out; ++o) {
        double acc = 0.0;
        for (int b = b_begin; b < b_end; ++b) {
            const double* p = dout + b * img + o * ch;
            for (std::size_t k = 0; k < ch; ++k) acc += p[k];
        }
        dbias[o] += acc;
    }
}

/// Weight-gradient loop shared by the backends; Dot supplies the row dot.
template <class Dot>
inline void conv_grad_weights_loop(const double* dout, const double* in, double* dw,
                                   ConvDims d, int b_begin, int b_end, Dot dot) {
    const std::size_t ch = std::size_t(d.h) * d.w;
    const std::size_t in_img = std::size_t(d.c_in) * ch;
    const std::size_t out_img = std::size_t(d.c_out) * ch;
    for (int o = 0; o < d.c_out; ++o) {
        for (int i = 0; i < d.c_in; ++i) {
            for (int dy = 0; dy < 3; ++dy) {
                const int y_lo = dy == 0 ? 1 : 0;
                const int y_hi = dy == 2 ? d.h - 2 : d.h - 1;
                for (int dx = 0; dx < 3; ++dx) {
                    const int x_lo = dx == 0 ? 1 : 0;
                    const int x_hi = dx == 2 ? d.w - 2 : d.w - 1;
                    const int m = x_hi - x_lo + 1;
                    if (m <= 0 || y_hi < y_lo) continue;
                    double acc = 0.0;
                    for (int b = b_begin; b < b_end; ++b) {
                        const double* dout_p = dout + b * out_img + o * ch;
                        const double* in_p = in + b * in_img + i * ch;
                        for (int y = y_lo; y <= y_hi; ++y) {
                            const double* a = dout_p + std::size_t(y) * d.w + x_lo;
                            const double* v = in_p + std::size_t(y + dy - 1) * d.w + x_lo + dx - 1;
                            acc += dot(a, v, m);
                        }
                    }
                    dw[(std::size_t(o) * d.c_in + i) * 9 + dy * 3 + dx] += acc;
                }
            }
        }
    }
}

}  // namespace planter::kernels::detail
