#include "fedfa/kernels.hpp"

namespace fedfa::kernels::serial {

void linear_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    std::span<double> y, LinearDims d) {
    for (std::size_t n = 0; n < d.batch; ++n) {
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
    for (std::size_t n = 0; n < d.batch; ++n) {
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
    for (std::size_t o = 0; o < d.out; ++o) {
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
    for (std::size_t r = 0; r < rows; ++r) {
        double* ar = acc.data() + r * acc_cols;
        double* cr = count.data() + r * acc_cols;
        const double* sr = src.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            ar[c] += scale * sr[c];
            cr[c] += weight;
        }
    }
}

}  // namespace fedfa::kernels::serial
