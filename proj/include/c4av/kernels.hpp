#pragma once

#include <vector>

#include "c4av/tensor.hpp"

// Dense compute kernels. Every kernel has a serial reference implementation
// (*_serial) and an OpenMP variant (*_omp); the unsuffixed entry point
// dispatches on `parallel`. Parallel loops are over independent output
// elements with static scheduling, so both variants produce bitwise-equal
// results; tests and bench_kernels compare them.

namespace c4av::kernels {

struct ConvShape {
    int in_c, in_h, in_w;
    int out_c, kernel, stride, pad;
    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// in: C*H*W, weight: OC*C*K*K, bias: OC, out: OC*OH*OW
void conv2d_forward_serial(const double* in, const double* weight, const double* bias,
                           const ConvShape& s, double* out);
void conv2d_forward_omp(const double* in, const double* weight, const double* bias,
                        const ConvShape& s, double* out);
void conv2d_forward(const double* in, const double* weight, const double* bias,
                    const ConvShape& s, double* out, bool parallel);

// d_in may be null when the input gradient is not needed (first layer).
void conv2d_backward_serial(const double* in, const double* weight, const double* d_out,
                            const ConvShape& s, double* d_in, double* d_weight, double* d_bias);
void conv2d_backward_omp(const double* in, const double* weight, const double* d_out,
                         const ConvShape& s, double* d_in, double* d_weight, double* d_bias);
void conv2d_backward(const double* in, const double* weight, const double* d_out,
                     const ConvShape& s, double* d_in, double* d_weight, double* d_bias,
                     bool parallel);

void relu_forward(const double* in, double* out, std::size_t n);
void relu_backward(const double* in, const double* d_out, double* d_in, std::size_t n);

struct PoolShape {
    int c, in_h, in_w, kernel, stride, pad;
    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// argmax: flat input index per output element, used by the backward pass.
void maxpool_forward(const double* in, const PoolShape& s, double* out, int* argmax);
void maxpool_backward(const double* d_out, const PoolShape& s, const int* argmax, double* d_in);

// in: C*H*W -> out: C
void global_avg_pool_forward(const double* in, int c, int h, int w, double* out);
void global_avg_pool_backward(const double* d_out, int c, int h, int w, double* d_in);

// y = W x + b;  W: out_dim x in_dim (row major)
void linear_forward_serial(const double* x, const double* w, const double* b, int out_dim,
                           int in_dim, double* y);
void linear_forward_omp(const double* x, const double* w, const double* b, int out_dim,
                        int in_dim, double* y);
void linear_forward(const double* x, const double* w, const double* b, int out_dim, int in_dim,
                    double* y, bool parallel);
// d_x may be null. d_w/d_b are accumulated into.
void linear_backward(const double* x, const double* w, const double* d_y, int out_dim, int in_dim,
                     double* d_x, double* d_w, double* d_b);

// y = v / max(||v||, eps). Returns the norm actually used.
double l2_normalize(const double* v, int n, double* y, double eps = 1e-12);
// d_v accumulated; `y` and `norm` are the forward outputs.
void l2_normalize_backward(const double* y, double norm, const double* d_y, int n, double* d_v);

}  // namespace c4av::kernels
