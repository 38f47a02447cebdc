#pragma once

// Straightforward, unoptimised reference computations. Every function here
// works on plain std::vector data and re-derives its result from the
// defining formula, never from the library implementation.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace fedfa::oracle {

using Vec = std::vector<double>;

// Full sort, nearest-rank threshold, strict less-than, with the <20 and
// empty-result fallbacks.
Vec percentile_keep(const Vec& values, double p);

double l2(const Vec& v);

// Row-major [rows x cols] matrix value at (r, c) of the leading block.
Vec leading_block(const Vec& m, std::size_t rows, std::size_t cols, std::size_t keep_rows, std::size_t keep_cols);

struct ClientMatrix {
    Vec values;  // row-major
    std::size_t rows;
    std::size_t cols;
    double weight;  // N_D
    double alpha;
};

// Element-by-element weighted average over the clients whose block covers
// (r, c); positions no client reaches take fallback[r, c].
Vec partial_average(const std::vector<ClientMatrix>& clients, std::size_t rows, std::size_t cols,
                    const Vec& fallback, Vec* counts = nullptr);

// Pearson correlation via the raw-sum formula.
double pcc_raw(const Vec& a, const Vec& b);

// Best mean over all one-to-one row->column assignments of a square score matrix.
double best_assignment_mean(const Vec& scores, std::size_t n);

// count rows' indices in descending L2 norm, ties to the lower index.
std::vector<std::size_t> argmax_rows(const Vec& m, std::size_t rows, std::size_t cols, std::size_t count);

// Population-variance BN evaluated directly in long double.
std::vector<long double> batch_norm_ld(const Vec& v, long double eps);

// Round-robin class dealing for the non-iid split: classes held per client.
std::vector<std::vector<std::size_t>> noniid_classes(const std::vector<std::size_t>& class_perm,
                                                     std::size_t n_clients, std::size_t k);

// Per-epoch multiply-accumulates for a chain of linear layers (out, in).
double macs(const std::vector<std::pair<std::size_t, std::size_t>>& layers, std::size_t samples,
            std::size_t factor);

// Expected layer for the thin/wide accumulation case.
Vec thin_wide_expected();

// Available oracle cases and their printed expected values.
std::map<std::string, std::string> case_descriptions();
std::string run_case(const std::string& name);

}  // namespace fedfa::oracle
