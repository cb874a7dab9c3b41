#pragma once

#include <cstddef>
#include <string>

namespace planter::kernels {

// Numeric contract shared by every backend: each output element is
// accumulated in one fixed order, so the scalar and SIMD tables produce
// bitwise-identical results and dispatch never changes a run.
//   conv forward     out[b,o,y,x]: bias first, then taps in (i, dy, dx)
//                    order, out-of-bounds taps skipped.
//   conv grad-data   din[b,i,y,x] += taps in (o, dy, dx) order.
//   conv grad-weight dw[o,i,dy,dx]: rows in (b, y) order; within a row a
//                    4-stripe sum — p0..p3 over x in steps of 4, combined
//                    as (p0+p1)+(p2+p3), then the tail appended in order.
// SIMD variants vectorize across output columns (or the 4 stripes); they
// never reorder a reduction.

/// Conv layer extents; kernel 3x3, stride 1, zero padding 1 throughout.
struct ConvDims {
    int n = 0;      // batch
    int c_in = 0;   // input channels
    int c_out = 0;  // output channels
    int h = 0, w = 0;
};

struct LinearDims {
    int n = 0;
    int in_features = 0;
    int out_features = 0;
};

/// Hot inner loops, dispatched per backend. All pointers are dense row-major
/// (n,c,h,w); weights (c_out,c_in,3,3); batch range [b_begin, b_end) lets the
/// caller split work across threads (forward/grad-data write disjoint slices,
/// grad-weights accumulates into caller-provided buffers that the caller
/// merges in a fixed chunk order).
struct KernelTable {
    void (*conv3x3_forward)(const double* in, const double* w, const double* bias, double* out,
                            ConvDims d, int b_begin, int b_end);
    void (*conv3x3_grad_data)(const double* dout, const double* w, double* din, ConvDims d,
                              int b_begin, int b_end);
    void (*conv3x3_grad_weights)(const double* dout, const double* in, double* dw, double* dbias,
                                 ConvDims d, int b_begin, int b_end);
    void (*relu_forward)(const double* in, double* out, std::size_t count);
    void (*relu_backward)(const double* in, const double* dout, double* din, std::size_t count);
    const char* name;
};

enum class Backend { scalar, avx2 };

const KernelTable& scalar_table();
/// nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table();
/// True when an AVX2 table exists and the CPU can run it.
bool avx2_available();

/// Backend in use: best available, unless PLANTER_BACKEND (or force_backend)
/// picked one explicitly. Resolved once on first use.
const KernelTable& active_table();
Backend active_backend();
/// Overrides dispatch; throws std::runtime_error if the backend cannot run
/// here. Must be called before the first active_table() use to take effect.
void force_backend(Backend b);
std::string backend_name(Backend b);

// Scalar-only helpers (not worth vectorizing at these sizes); shared by every
// backend so dispatch cannot affect them.

void linear_forward(const double* in, const double* w, const double* bias, double* out,
                    LinearDims d);
void linear_grad_data(const double* dout, const double* w, double* din, LinearDims d);
void linear_grad_weights(const double* dout, const double* in, double* dw, double* dbias,
                         LinearDims d);

/// 2x2 max pooling, stride 2; h and w must be even (caller checks). argmax
/// receives the flat input index of each window's max, first-encountered in
/// (y, x) scan order on ties.
void maxpool2x2_forward(const double* in, double* out, int n, int c, int h, int w,
                        std::size_t* argmax);
void maxpool2x2_backward(const double* dout, double* din, const std::size_t* argmax,
                         std::size_t out_count);

/// Numerically stabilized log-softmax of one row.
void log_softmax_row(const double* z, double* logp, int classes);

}  // namespace planter::kernels
