#include <vector>

#include <benchmark/benchmark.h>

#include "fedfa/kernels.hpp"
#include "fedfa/rng.hpp"

namespace {

namespace k = fedfa::kernels;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    fedfa::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

template <bool Parallel>
void BM_LinearForward(benchmark::State& state) {
    const k::LinearDims d{static_cast<std::size_t>(state.range(0)), 256, 256};
    auto x = random_vec(d.batch * d.in, 1), w = random_vec(d.out * d.in, 2), b = random_vec(d.out, 3);
    std::vector<double> y(d.batch * d.out);
    k::set_num_threads(Parallel ? static_cast<int>(state.range(1)) : 1);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::linear_forward(x, w, b, y, d);
        else
            k::serial::linear_forward(x, w, b, y, d);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(d.batch * d.in * d.out));
}

template <bool Parallel>
void BM_BackwardParams(benchmark::State& state) {
    const k::LinearDims d{static_cast<std::size_t>(state.range(0)), 256, 256};
    auto dy = random_vec(d.batch * d.out, 4), x = random_vec(d.batch * d.in, 5);
    std::vector<double> dw(d.out * d.in), db(d.out);
    k::set_num_threads(Parallel ? static_cast<int>(state.range(1)) : 1);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::linear_backward_params(dy, x, dw, db, d);
        else
            k::serial::linear_backward_params(dy, x, dw, db, d);
        benchmark::DoNotOptimize(dw.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(d.batch * d.in * d.out));
}

template <bool Parallel>
void BM_Accumulate(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    auto src = random_vec(n * n, 6);
    std::vector<double> acc(n * n), count(n * n);
    k::set_num_threads(Parallel ? static_cast<int>(state.range(1)) : 1);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::accumulate_block(acc, count, n, src, n, n, 0.5, 1.0);
        else
            k::serial::accumulate_block(acc, count, n, src, n, n, 0.5, 1.0);
        benchmark::DoNotOptimize(acc.data());
    }
}

}  // namespace

BENCHMARK(BM_LinearForward<false>)->Args({64, 1})->Args({256, 1});
BENCHMARK(BM_LinearForward<true>)->Args({64, 2})->Args({256, 2})->Args({256, 4});
BENCHMARK(BM_BackwardParams<false>)->Args({64, 1})->Args({256, 1});
BENCHMARK(BM_BackwardParams<true>)->Args({64, 2})->Args({256, 2})->Args({256, 4});
BENCHMARK(BM_Accumulate<false>)->Args({512, 1});
BENCHMARK(BM_Accumulate<true>)->Args({512, 2})->Args({512, 4});

BENCHMARK_MAIN();
