#include "c4av/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace c4av::kernels {

namespace {

inline double conv_out_at(const double* in, const double* weight, const double* bias,
                          const ConvShape& s, int oc, int oy, int ox) {
    double acc = bias ? bias[oc] : 0.0;
    const double* wk = weight + static_cast<std::size_t>(oc) * s.in_c * s.kernel * s.kernel;
    for (int c = 0; c < s.in_c; ++c) {
        const double* inc = in + static_cast<std::size_t>(c) * s.in_h * s.in_w;
        for (int ky = 0; ky < s.kernel; ++ky) {
            int iy = oy * s.stride - s.pad + ky;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int kx = 0; kx < s.kernel; ++kx) {
                int ix = ox * s.stride - s.pad + kx;
                if (ix < 0 || ix >= s.in_w) continue;
                acc += inc[iy * s.in_w + ix] * wk[(c * s.kernel + ky) * s.kernel + kx];
            }
        }
    }
    return acc;
}

}  // namespace

void conv2d_forward_serial(const double* in, const double* weight, const double* bias,
                           const ConvShape& s, double* out) {
    const int oh = s.out_h(), ow = s.out_w();
    for (int oc = 0; oc < s.out_c; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                out[(oc * oh + oy) * ow + ox] = conv_out_at(in, weight, bias, s, oc, oy, ox);
}

void conv2d_forward_omp(const double* in, const double* weight, const double* bias,
                        const ConvShape& s, double* out) {
    const int oh = s.out_h(), ow = s.out_w();
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.out_c; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                out[(oc * oh + oy) * ow + ox] = conv_out_at(in, weight, bias, s, oc, oy, ox);
}

void conv2d_forward(const double* in, const double* weight, const double* bias,
                    const ConvShape& s, double* out, bool parallel) {
    if (parallel)
        conv2d_forward_omp(in, weight, bias, s, out);
    else
        conv2d_forward_serial(in, weight, bias, s, out);
}

namespace {

// Weight/bias gradients, summed per output channel.
inline void conv_backward_params_oc(const double* in, const double* d_out, const ConvShape& s,
                                    int oc, double* d_weight, double* d_bias) {
    const int oh = s.out_h(), ow = s.out_w();
    const double* doc = d_out + static_cast<std::size_t>(oc) * oh * ow;
    double* dwk = d_weight + static_cast<std::size_t>(oc) * s.in_c * s.kernel * s.kernel;
    double db = 0.0;
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            double g = doc[oy * ow + ox];
            if (g == 0.0) continue;
            db += g;
            for (int c = 0; c < s.in_c; ++c) {
                const double* inc = in + static_cast<std::size_t>(c) * s.in_h * s.in_w;
                for (int ky = 0; ky < s.kernel; ++ky) {
                    int iy = oy * s.stride - s.pad + ky;
                    if (iy < 0 || iy >= s.in_h) continue;
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        int ix = ox * s.stride - s.pad + kx;
                        if (ix < 0 || ix >= s.in_w) continue;
                        dwk[(c * s.kernel + ky) * s.kernel + kx] += g * inc[iy * s.in_w + ix];
                    }
                }
            }
        }
    if (d_bias) d_bias[oc] += db;
}

// Input gradient for one input channel: gather over output positions.
inline void conv_backward_input_c(const double* weight, const double* d_out, const ConvShape& s,
                                  int c, double* d_in) {
    const int oh = s.out_h(), ow = s.out_w();
    double* dic = d_in + static_cast<std::size_t>(c) * s.in_h * s.in_w;
    for (int oc = 0; oc < s.out_c; ++oc) {
        const double* doc = d_out + static_cast<std::size_t>(oc) * oh * ow;
        const double* wk =
            weight + (static_cast<std::size_t>(oc) * s.in_c + c) * s.kernel * s.kernel;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double g = doc[oy * ow + ox];
                if (g == 0.0) continue;
                for (int ky = 0; ky < s.kernel; ++ky) {
                    int iy = oy * s.stride - s.pad + ky;
                    if (iy < 0 || iy >= s.in_h) continue;
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        int ix = ox * s.stride - s.pad + kx;
                        if (ix < 0 || ix >= s.in_w) continue;
                        dic[iy * s.in_w + ix] += g * wk[ky * s.kernel + kx];
                    }
                }
            }
    }
}

}  // namespace

void conv2d_backward_serial(const double* in, const double* weight, const double* d_out,
                            const ConvShape& s, double* d_in, double* d_weight, double* d_bias) {
    for (int oc = 0; oc < s.out_c; ++oc) conv_backward_params_oc(in, d_out, s, oc, d_weight, d_bias);
    if (d_in)
        for (int c = 0; c < s.in_c; ++c) conv_backward_input_c(weight, d_out, s, c, d_in);
}

void conv2d_backward_omp(const double* in, const double* weight, const double* d_out,
                         const ConvShape& s, double* d_in, double* d_weight, double* d_bias) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.out_c; ++oc) conv_backward_params_oc(in, d_out, s, oc, d_weight, d_bias);
    if (d_in) {
#pragma omp parallel for schedule(static)
        for (int c = 0; c < s.in_c; ++c) conv_backward_input_c(weight, d_out, s, c, d_in);
    }
}

void conv2d_backward(const double* in, const double* weight, const double* d_out,
                     const ConvShape& s, double* d_in, double* d_weight, double* d_bias,
                     bool parallel) {
    if (parallel)
        conv2d_backward_omp(in, weight, d_out, s, d_in, d_weight, d_bias);
    else
        conv2d_backward_serial(in, weight, d_out, s, d_in, d_weight, d_bias);
}

void relu_forward(const double* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(const double* in, const double* d_out, double* d_in, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) d_in[i] += in[i] > 0.0 ? d_out[i] : 0.0;
}

void maxpool_forward(const double* in, const PoolShape& s, double* out, int* argmax) {
    const int oh = s.out_h(), ow = s.out_w();
    for (int c = 0; c < s.c; ++c) {
        const double* inc = in + static_cast<std::size_t>(c) * s.in_h * s.in_w;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int ky = 0; ky < s.kernel; ++ky) {
                    int iy = oy * s.stride - s.pad + ky;
                    if (iy < 0 || iy >= s.in_h) continue;
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        int ix = ox * s.stride - s.pad + kx;
                        if (ix < 0 || ix >= s.in_w) continue;
                        int idx = iy * s.in_w + ix;
                        if (inc[idx] > best) {
                            best = inc[idx];
                            best_idx = idx;
                        }
                    }
                }
                std::size_t o = (static_cast<std::size_t>(c) * oh + oy) * ow + ox;
                out[o] = best;
                argmax[o] = c * s.in_h * s.in_w + best_idx;
            }
    }
}

void maxpool_backward(const double* d_out, const PoolShape& s, const int* argmax, double* d_in) {
    const std::size_t n = static_cast<std::size_t>(s.c) * s.out_h() * s.out_w();
    for (std::size_t i = 0; i < n; ++i) d_in[argmax[i]] += d_out[i];
}

void global_avg_pool_forward(const double* in, int c, int h, int w, double* out) {
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        const double* inc = in + static_cast<std::size_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) acc += inc[i];
        out[ci] = acc * inv;
    }
}

void global_avg_pool_backward(const double* d_out, int c, int h, int w, double* d_in) {
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int ci = 0; ci < c; ++ci) {
        double g = d_out[ci] * inv;
        double* dic = d_in + static_cast<std::size_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) dic[i] += g;
    }
}

void linear_forward_serial(const double* x, const double* w, const double* b, int out_dim,
                           int in_dim, double* y) {
    for (int o = 0; o < out_dim; ++o) {
        double acc = b ? b[o] : 0.0;
        const double* wr = w + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
        y[o] = acc;
    }
}

void linear_forward_omp(const double* x, const double* w, const double* b, int out_dim, int in_dim,
                        double* y) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_dim; ++o) {
        double acc = b ? b[o] : 0.0;
        const double* wr = w + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
        y[o] = acc;
    }
}

void linear_forward(const double* x, const double* w, const double* b, int out_dim, int in_dim,
                    double* y, bool parallel) {
    if (parallel)
        linear_forward_omp(x, w, b, out_dim, in_dim, y);
    else
        linear_forward_serial(x, w, b, out_dim, in_dim, y);
}

void linear_backward(const double* x, const double* w, const double* d_y, int out_dim, int in_dim,
                     double* d_x, double* d_w, double* d_b) {
    for (int o = 0; o < out_dim; ++o) {
        double g = d_y[o];
        if (d_b) d_b[o] += g;
        const double* wr = w + static_cast<std::size_t>(o) * in_dim;
        double* dwr = d_w ? d_w + static_cast<std::size_t>(o) * in_dim : nullptr;
        for (int i = 0; i < in_dim; ++i) {
            if (dwr) dwr[i] += g * x[i];
            if (d_x) d_x[i] += g * wr[i];
        }
    }
}

double l2_normalize(const double* v, int n, double* y, double eps) {
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += v[i] * v[i];
    double norm = std::max(std::sqrt(sq), eps);
    for (int i = 0; i < n; ++i) y[i] = v[i] / norm;
    return norm;
}

void l2_normalize_backward(const double* y, double norm, const double* d_y, int n, double* d_v) {
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += y[i] * d_y[i];
    for (int i = 0; i < n; ++i) d_v[i] += (d_y[i] - y[i] * dot) / norm;
}

}  // namespace c4av::kernels
