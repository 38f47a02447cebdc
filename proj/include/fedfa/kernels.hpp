#pragma once

#include <cstddef>
#include <span>

// Dense inner loops used by the forward/backward passes and the server-side
// accumulators. Two implementations with identical per-element summation
// order: `serial` is the reference; `parallel` splits independent output rows
// across OpenMP threads. Results are bit-identical between the two for any
// thread count, which the determinism contract relies on.
namespace fedfa::kernels {

struct LinearDims {
    std::size_t batch;
    std::size_t in;
    std::size_t out;
};

namespace serial {

// y[n, out] = x[n, in] * w[out, in]^T + b[out]
void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearDims d);
// dx[n, in] = dy[n, out] * w[out, in]
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, LinearDims d);
// dw[out, in] = sum_n dy[n, out] x[n, in];  db[out] = sum_n dy[n, out]
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, LinearDims d);
// acc[:rows, :cols] += scale * src[rows, cols];  count[:rows, :cols] += weight
// acc and count are row-major with row stride `acc_cols`.
void accumulate_block(std::span<double> acc, std::span<double> count, std::size_t acc_cols,
                      std::span<const double> src, std::size_t rows, std::size_t cols,
                      double scale, double weight);

}  // namespace serial

namespace parallel {

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearDims d);
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, LinearDims d);
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, LinearDims d);
void accumulate_block(std::span<double> acc, std::span<double> count, std::size_t acc_cols,
                      std::span<const double> src, std::size_t rows, std::size_t cols,
                      double scale, double weight);

}  // namespace parallel

// Process-wide thread budget. 1 selects the serial kernels; >1 selects the
// OpenMP kernels (which fall back to serial inside an enclosing parallel
// region, e.g. when clients are trained concurrently).
void set_num_threads(int n);
int num_threads();

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearDims d);
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, LinearDims d);
void linear_backward_params(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> db, LinearDims d);
void accumulate_block(std::span<double> acc, std::span<double> count, std::size_t acc_cols,
                      std::span<const double> src, std::size_t rows, std::size_t cols,
                      double scale, double weight);

}  // namespace fedfa::kernels
