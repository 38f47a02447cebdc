#include <omp.h>

#include <algorithm>
#include <atomic>

#include "fedfa/kernels.hpp"

namespace fedfa::kernels {

namespace {

std::atomic<int> g_threads{1};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelGrain = 1 << 14;

bool use_parallel(std::size_t work) {
    return g_threads.load(std::memory_order_relaxed) > 1 && !omp_in_parallel() &&
           work >= kParallelGrain;
}

}  // namespace

void set_num_threads(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }
int num_threads() { return g_threads.load(std::memory_order_relaxed); }

namespace parallel {

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearDims d) {
    const auto batch = static_cast<std::ptrdiff_t>(d.batch);
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
        const double* xn = x.data() + n * d.in;
        double* yn = y.data() + n * d.out;
        for (std::size_t o = 0; o < d.out; ++o) {
            const double* wo = w.data() + o * d.in;
            double acc = b[o];
            for (std::size_t i = 0; i < d.in; ++i) acc += wo[i] * xn[i];
            yn[o] = acc;
        }
    }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, LinearDims d) {
    const auto batch = static_cast<std::ptrdiff_t>(d.batch);
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (std::ptrdiff_t n = 0; n < batch; ++n) {
        const double* dyn = dy.data() + n * d.out;
        double* dxn = dx.data() + n * d.in;
        for (std::size_t i = 0; i < d.in; ++i) dxn[i] = 0.0;
        for (std::size_t o = 0; o < d.out; ++o) {
            const double g = dyn[o];
            const double* wo = w.data() + o * d.in;
            for (std::size_t i = 0; i < d.in; ++i) dxn[i] += g * wo[i];
        }
    }
}

void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, LinearDims d) {
    const auto out = static_cast<std::ptrdiff_t>(d.out);
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (std::ptrdiff_t o = 0; o < out; ++o) {
        double* dwo = dw.data() + o * d.in;
        for (std::size_t i = 0; i < d.in; ++i) dwo[i] = 0.0;
        double bsum = 0.0;
        for (std::size_t n = 0; n < d.batch; ++n) {
            const double g = dy[n * d.out + o];
            const double* xn = x.data() + n * d.in;
            for (std::size_t i = 0; i < d.in; ++i) dwo[i] += g * xn[i];
            bsum += g;
        }
        db[o] = bsum;
    }
}

void accumulate_block(std::span<double> acc, std::span<double> count, std::size_t acc_cols,
                      std::span<const double> src, std::size_t rows, std::size_t cols,
                      double scale, double weight) {
    const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (std::ptrdiff_t r = 0; r < nrows; ++r) {
        double* ar = acc.data() + r * acc_cols;
        double* cr = count.data() + r * acc_cols;
        const double* sr = src.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            ar[c] += scale * sr[c];
            cr[c] += weight;
        }
    }
}

}  // namespace parallel

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearDims d) {
    if (use_parallel(d.batch * d.in * d.out)) parallel::linear_forward(x, w, b, y, d);
    else serial::linear_forward(x, w, b, y, d);
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, LinearDims d) {
    if (use_parallel(d.batch * d.in * d.out)) parallel::linear_backward_input(dy, w, dx, d);
    else serial::linear_backward_input(dy, w, dx, d);
}

void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, LinearDims d) {
    if (use_parallel(d.batch * d.in * d.out)) parallel::linear_backward_params(dy, x, dw, db, d);
    else serial::linear_backward_params(dy, x, dw, db, d);
}

void accumulate_block(std::span<double> acc, std::span<double> count, std::size_t acc_cols,
                      std::span<const double> src, std::size_t rows, std::size_t cols,
                      double scale, double weight) {
    if (use_parallel(rows * cols)) parallel::accumulate_block(acc, count, acc_cols, src, rows, cols, scale, weight);
    else serial::accumulate_block(acc, count, acc_cols, src, rows, cols, scale, weight);
}

}  // namespace fedfa::kernels
