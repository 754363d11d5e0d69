// Compares the serial reference kernels against the OpenMP variants: checks
// bitwise agreement, reports wall time for each.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "c4av/kernels.hpp"

using namespace c4av;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void fill_random(std::vector<double>& v, std::mt19937& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& x : v) x = dist(rng);
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a == b;
}

}  // namespace

int main() {
    std::mt19937 rng(42);
    const int reps = 20;
    bool all_equal = true;

    {
        kernels::ConvShape s{16, 64, 64, 32, 3, 1, 1};
        std::vector<double> in(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w);
        std::vector<double> w(static_cast<std::size_t>(s.out_c) * s.in_c * s.kernel * s.kernel);
        std::vector<double> b(s.out_c);
        std::vector<double> out_s(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w());
        std::vector<double> out_p(out_s.size());
        fill_random(in, rng);
        fill_random(w, rng);
        fill_random(b, rng);

        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::conv2d_forward_serial(in.data(), w.data(), b.data(), s, out_s.data());
        double serial_ms = ms_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::conv2d_forward_omp(in.data(), w.data(), b.data(), s, out_p.data());
        double omp_ms = ms_since(t0) / reps;
        bool eq = bitwise_equal(out_s, out_p);
        all_equal = all_equal && eq;
        std::printf("conv2d_forward  16x64x64 -> 32ch: serial %8.2f ms  omp %8.2f ms  "
                    "speedup %.2fx  bitwise_equal=%s\n",
                    serial_ms, omp_ms, serial_ms / omp_ms, eq ? "yes" : "NO");
    }

    {
        kernels::ConvShape s{16, 64, 64, 32, 3, 1, 1};
        std::vector<double> in(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w);
        std::vector<double> w(static_cast<std::size_t>(s.out_c) * s.in_c * s.kernel * s.kernel);
        std::vector<double> dout(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w());
        fill_random(in, rng);
        fill_random(w, rng);
        fill_random(dout, rng);
        std::vector<double> din_s(in.size()), dw_s(w.size()), db_s(s.out_c);
        std::vector<double> din_p(in.size()), dw_p(w.size()), db_p(s.out_c);

        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r) {
            std::fill(din_s.begin(), din_s.end(), 0.0);
            std::fill(dw_s.begin(), dw_s.end(), 0.0);
            std::fill(db_s.begin(), db_s.end(), 0.0);
            kernels::conv2d_backward_serial(in.data(), w.data(), dout.data(), s, din_s.data(),
                                            dw_s.data(), db_s.data());
        }
        double serial_ms = ms_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r) {
            std::fill(din_p.begin(), din_p.end(), 0.0);
            std::fill(dw_p.begin(), dw_p.end(), 0.0);
            std::fill(db_p.begin(), db_p.end(), 0.0);
            kernels::conv2d_backward_omp(in.data(), w.data(), dout.data(), s, din_p.data(),
                                         dw_p.data(), db_p.data());
        }
        double omp_ms = ms_since(t0) / reps;
        bool eq = bitwise_equal(din_s, din_p) && bitwise_equal(dw_s, dw_p) &&
                  bitwise_equal(db_s, db_p);
        all_equal = all_equal && eq;
        std::printf("conv2d_backward 16x64x64 -> 32ch: serial %8.2f ms  omp %8.2f ms  "
                    "speedup %.2fx  bitwise_equal=%s\n",
                    serial_ms, omp_ms, serial_ms / omp_ms, eq ? "yes" : "NO");
    }

    {
        const int out_dim = 2048, in_dim = 2048;
        std::vector<double> x(in_dim), w(static_cast<std::size_t>(out_dim) * in_dim), b(out_dim);
        std::vector<double> y_s(out_dim), y_p(out_dim);
        fill_random(x, rng);
        fill_random(w, rng);
        fill_random(b, rng);

        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::linear_forward_serial(x.data(), w.data(), b.data(), out_dim, in_dim,
                                           y_s.data());
        double serial_ms = ms_since(t0) / reps;
        t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kernels::linear_forward_omp(x.data(), w.data(), b.data(), out_dim, in_dim, y_p.data());
        double omp_ms = ms_since(t0) / reps;
        bool eq = bitwise_equal(y_s, y_p);
        all_equal = all_equal && eq;
        std::printf("linear_forward      2048x2048: serial %8.2f ms  omp %8.2f ms  "
                    "speedup %.2fx  bitwise_equal=%s\n",
                    serial_ms, omp_ms, serial_ms / omp_ms, eq ? "yes" : "NO");
    }

    return all_equal ? 0 : 1;
}
