#include <algorithm>
#include <cmath>

#include "kernels_inline.hpp"
#include "planter/kernels.hpp"

namespace planter::kernels {

namespace {

void conv3x3_forward_scalar(const double* in, const double* w, const double* bias, double* out,
                            ConvDims d, int b_begin, int b_end) {
    const std::size_t ch = std::size_t(d.h) * d.w;
    const std::size_t in_img = std::size_t(d.c_in) * ch;
    const std::size_t out_img = std::size_t(d.c_out) * ch;
    for (int b = b_begin; b < b_end; ++b) {
        const double* in_b = in + b * in_img;
        for (int o = 0; o < d.c_out; ++o) {
            const double* w_o = w + std::size_t(o) * d.c_in * 9;
            double* out_p = out + b * out_img + o * ch;
            for (int y = 0; y < d.h; ++y)
                for (int x = 0; x < d.w; ++x)
                    out_p[std::size_t(y) * d.w + x] =
                        detail::conv_pixel(in_b, w_o, bias[o], d.c_in, d.h, d.w, y, x);
        }
    }
}

void conv3x3_grad_data_scalar(const double* dout, const double* w, double* din, ConvDims d,
                              int b_begin, int b_end) {
    const std::size_t ch = std::size_t(d.h) * d.w;
    const std::size_t in_img = std::size_t(d.c_in) * ch;
    const std::size_t out_img = std::size_t(d.c_out) * ch;
    for (int b = b_begin; b < b_end; ++b) {
        const double* dout_b = dout + b * out_img;
        for (int i = 0; i < d.c_in; ++i) {
            double* din_p = din + b * in_img + i * ch;
            for (int y = 0; y < d.h; ++y)
                for (int x = 0; x < d.w; ++x)
                    din_p[std::size_t(y) * d.w + x] +=
                        detail::grad_data_pixel(dout_b, w, d.c_out, d.c_in, i, d.h, d.w, y, x);
        }
    }
}

void conv3x3_grad_weights_scalar(const double* dout, const double* in, double* dw, double* dbias,
                                 ConvDims d, int b_begin, int b_end) {
    detail::conv_grad_weights_loop(dout, in, dw, d, b_begin, b_end, detail::striped_dot);
    detail::conv_grad_bias(dout, dbias, d, b_begin, b_end);
}

void relu_forward_scalar(const double* in, double* out, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
}

void relu_backward_scalar(const double* in, const double* dout, double* din, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) din[k] += in[k] > 0.0 ? dout[k] : 0.0;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{conv3x3_forward_scalar, conv3x3_grad_data_scalar,
                                   conv3x3_grad_weights_scalar, relu_forward_scalar,
                                   relu_backward_scalar, "scalar"};
    return table;
}

void linear_forward(const double* in, const double* w, const double* bias, double* out,
                    LinearDims d) {
    for (int b = 0; b < d.n; ++b) {
        const double* in_b = in + std::size_t(b) * d.in_features;
        double* out_b = out + std::size_t(b) * d.out_features;
        for (int o = 0; o < d.out_features; ++o) {
            const double* w_o = w + std::size_t(o) * d.in_features;
            double acc = bias[o];
            for (int i = 0; i < d.in_features; ++i) acc += in_b[i] * w_o[i];
            out_b[o] = acc;
        }
    }
}

void linear_grad_data(const double* dout, const double* w, double* din, LinearDims d) {
    for (int b = 0; b < d.n; ++b) {
        const double* dout_b = dout + std::size_t(b) * d.out_features;
        double* din_b = din + std::size_t(b) * d.in_features;
        for (int i = 0; i < d.in_features; ++i) {
            double acc = 0.0;
            for (int o = 0; o < d.out_features; ++o)
                acc += dout_b[o] * w[std::size_t(o) * d.in_features + i];
            din_b[i] += acc;
        }
    }
}

void linear_grad_weights(const double* dout, const double* in, double* dw, double* dbias,
                         LinearDims d) {
    for (int o = 0; o < d.out_features; ++o) {
        double* dw_o = dw + std::size_t(o) * d.in_features;
        double bacc = 0.0;
        for (int b = 0; b < d.n; ++b) {
            const double g = dout[std::size_t(b) * d.out_features + o];
            bacc += g;
            const double* in_b = in + std::size_t(b) * d.in_features;
            for (int i = 0; i < d.in_features; ++i) dw_o[i] += g * in_b[i];
        }
        dbias[o] += bacc;
    }
}

void maxpool2x2_forward(const double* in, double* out, int n, int c, int h, int w,
                        std::size_t* argmax) {
    const int oh = h / 2, ow = w / 2;
    std::size_t oi = 0;
    for (int b = 0; b < n; ++b) {
        for (int ci = 0; ci < c; ++ci) {
            const std::size_t plane = (std::size_t(b) * c + ci) * h * w;
            for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                    // window scan order (y, x); strict > keeps the first max on ties
                    std::size_t best = plane + std::size_t(2 * y) * w + 2 * x;
                    double best_v = in[best];
                    const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                    for (std::size_t ix : cand) {
                        if (in[ix] > best_v) {
                            best_v = in[ix];
                            best = ix;
                        }
                    }
                    out[oi] = best_v;
                    argmax[oi] = best;
                    ++oi;
                }
            }
        }
    }
}

void maxpool2x2_backward(const double* dout, double* din, const std::size_t* argmax,
                         std::size_t out_count) {
    for (std::size_t k = 0; k < out_count; ++k) din[argmax[k]] += dout[k];
}

void log_softmax_row(const double* z, double* logp, int classes) {
    double m = z[0];
    for (int j = 1; j < classes; ++j) m = std::max(m, z[j]);
    double sum = 0.0;
    for (int j = 0; j < classes; ++j) sum += std::exp(z[j] - m);
    const double lse = std::log(sum);
    for (int j = 0; j < classes; ++j) logp[j] = z[j] - m - lse;
}

}  // namespace planter::kernels
