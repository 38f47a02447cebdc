#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fedfa::oracle {

Vec percentile_keep(const Vec& values, double p) {
    if (values.size() < 20) return values;
    Vec mags;
    for (double v : values) mags.push_back(std::fabs(v));
    std::sort(mags.begin(), mags.end());
    // smallest k with k >= p*n, found by counting up
    std::size_t k = 1;
    while (static_cast<double>(k) < p * static_cast<double>(values.size()) - 1e-9) ++k;
    double threshold = mags[k - 1];
    Vec kept;
    for (double v : values)
        if (std::fabs(v) < threshold) kept.push_back(v);
    if (kept.empty()) return values;
    return kept;
}

double l2(const Vec& v) {
    long double s = 0;
    for (double x : v) s += static_cast<long double>(x) * x;
    return static_cast<double>(std::sqrt(s));
}

Vec leading_block(const Vec& m, std::size_t rows, std::size_t cols, std::size_t keep_rows,
                  std::size_t keep_cols) {
    Vec out;
    for (std::size_t i = 0; i < rows * cols; ++i) {
        std::size_t r = i / cols, c = i % cols;
        if (r < keep_rows && c < keep_cols) out.push_back(m[i]);
    }
    return out;
}

Vec partial_average(const std::vector<ClientMatrix>& clients, std::size_t rows, std::size_t cols,
                    const Vec& fallback, Vec* counts) {
    Vec out(rows * cols);
    if (counts) counts->assign(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double num = 0, den = 0;
            for (const auto& cl : clients) {
                if (r >= cl.rows || c >= cl.cols) continue;
                num += cl.weight * cl.alpha * cl.values[r * cl.cols + c];
                den += cl.weight;
            }
            out[r * cols + c] = den > 0 ? num / den : fallback[r * cols + c];
            if (counts) (*counts)[r * cols + c] = den;
        }
    }
    return out;
}

double pcc_raw(const Vec& a, const Vec& b) {
    long double n = a.size(), sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        sab += static_cast<long double>(a[i]) * b[i];
        saa += static_cast<long double>(a[i]) * a[i];
        sbb += static_cast<long double>(b[i]) * b[i];
    }
    long double num = n * sab - sa * sb;
    long double den = std::sqrt(n * saa - sa * sa) * std::sqrt(n * sbb - sb * sb);
    return static_cast<double>(num / den);
}

double best_assignment_mean(const Vec& scores, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -INFINITY;
    do {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += scores[i * n + perm[i]];
        best = std::max(best, s / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::vector<std::size_t> argmax_rows(const Vec& m, std::size_t rows, std::size_t cols, std::size_t count) {
    Vec norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        Vec row(m.begin() + r * cols, m.begin() + (r + 1) * cols);
        norms[r] = l2(row);
    }
    // repeated selection of the largest remaining norm
    std::vector<std::size_t> order;
    std::vector<bool> used(rows, false);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t best = rows;
        for (std::size_t r = 0; r < rows; ++r)
            if (!used[r] && (best == rows || norms[r] > norms[best])) best = r;
        used[best] = true;
        order.push_back(best);
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(order[i % rows]);
    return out;
}

std::vector<long double> batch_norm_ld(const Vec& v, long double eps) {
    long double mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    long double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size();
    std::vector<long double> out;
    for (double x : v) out.push_back((x - mean) / std::sqrt(var + eps));
    return out;
}

std::vector<std::vector<std::size_t>> noniid_classes(const std::vector<std::size_t>& class_perm,
                                                     std::size_t n_clients, std::size_t k) {
    std::vector<std::vector<std::size_t>> out(n_clients);
    std::size_t next = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
            out[c].push_back(class_perm[next % class_perm.size()]);
            ++next;
        }
        std::sort(out[c].begin(), out[c].end());
    }
    return out;
}

double macs(const std::vector<std::pair<std::size_t, std::size_t>>& layers, std::size_t samples,
            std::size_t factor) {
    double total = 0;
    for (std::size_t s = 0; s < samples; ++s)
        for (auto [out, in] : layers)
            for (std::size_t i = 0; i < out * in; ++i) total += static_cast<double>(factor);
    return total;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

Vec one_to_hundred() {
    Vec v(100);
    for (int i = 0; i < 100; ++i) v[i] = i + 1;
    return v;
}

// 99 values spread just above 1, plus one outlier of 1000.
Vec outlier_jittered() {
    Vec v;
    for (int i = 0; i < 99; ++i) v.push_back(1.0 + i * 1e-9);
    v.push_back(1000.0);
    return v;
}

Vec outlier_tied() {
    Vec v(99, 1.0);
    v.push_back(1000.0);
    return v;
}

// Two clients of one 4x4 layer: thin (2x2) and wide (4x4), N=1, alpha=1.
std::vector<ClientMatrix> thin_wide_clients() {
    ClientMatrix thin{{1, 2, 3, 4}, 2, 2, 1.0, 1.0};
    ClientMatrix wide{Vec(16), 4, 4, 1.0, 1.0};
    for (int i = 0; i < 16; ++i) wide.values[i] = 10 + i;
    return {thin, wide};
}

}  // namespace

Vec thin_wide_expected() {
    return partial_average(thin_wide_clients(), 4, 4, Vec(16, 0.0));
}

std::map<std::string, std::string> case_descriptions() {
    return {
        {"percentile-1to100", "kept count and max for |v| = 1..100 at p = 0.95"},
        {"percentile-constant", "kept count for 50 equal values at p = 0.95"},
        {"sub95-outlier", "L2 after filtering 99 near-one values and one 1000 (jittered and tied)"},
        {"slice-index", "leading 2x3 block of t[i][j] = 10i + j, 3x3"},
        {"accum-4x4", "partial average of a 2x2 and a 4x4 client in a 4x4 layer"},
        {"pcc-123-124", "Pearson correlation of [1,2,3] and [1,2,4]"},
        {"argmax-rows", "duplicated row for norms [3,1,2], one extra unit"},
        {"mac-2x3", "MACS for one 2->3 layer, 10 samples, factor 3"},
        {"bn-bound", "max |BN(20y) - BN(y)| for eps = 1e-5 and unit-variance y"},
        {"noniid-coverage", "classes per client, 10 clients, 10 classes, k = 2"},
        {"matching-negated", "best assignment mean for a rank-one layer vs its negation"},
        {"dilution", "global shift alpha * lambda * delta / m for alpha = 0.8, lambda = 20, delta = 1, m = 10"},
    };
}

std::string run_case(const std::string& name) {
    std::ostringstream os;
    if (name == "percentile-1to100") {
        Vec k = percentile_keep(one_to_hundred(), 0.95);
        os << "kept=" << k.size() << " max=" << fmt(*std::max_element(k.begin(), k.end()));
    } else if (name == "percentile-constant") {
        os << "kept=" << percentile_keep(Vec(50, 2.5), 0.95).size();
    } else if (name == "sub95-outlier") {
        os << "jittered=" << fmt(l2(percentile_keep(outlier_jittered(), 0.95)))
           << " tied=" << fmt(l2(percentile_keep(outlier_tied(), 0.95)));
    } else if (name == "slice-index") {
        Vec t;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.push_back(10 * i + j);
        Vec b = leading_block(t, 3, 3, 2, 3);
        for (std::size_t i = 0; i < b.size(); ++i) os << (i ? "," : "") << b[i];
    } else if (name == "accum-4x4") {
        Vec counts;
        Vec m = partial_average(thin_wide_clients(), 4, 4, Vec(16, 0.0), &counts);
        for (std::size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << fmt(m[i]);
        os << " gamma=";
        for (std::size_t i = 0; i < counts.size(); ++i) os << (i ? "," : "") << counts[i];
    } else if (name == "pcc-123-124") {
        os << fmt(pcc_raw({1, 2, 3}, {1, 2, 4}));
    } else if (name == "argmax-rows") {
        // rows [3,0], [1,0], [2,0]; widening 3 -> 4 appends one copy
        os << join(argmax_rows({3, 0, 1, 0, 2, 0}, 3, 2, 1));
    } else if (name == "mac-2x3") {
        os << fmt(macs({{3, 2}}, 10, 3));
    } else if (name == "bn-bound") {
        // direct long double evaluation of both normalisations
        Vec y;
        for (int i = 0; i < 64; ++i) y.push_back(std::sin(0.37 * i + 0.1));
        auto a = batch_norm_ld(y, 1e-5L);
        Vec y20;
        for (double v : y) y20.push_back(20 * v);
        auto b = batch_norm_ld(y20, 1e-5L);
        long double dev = 0;
        for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, std::fabs(a[i] - b[i]));
        os << fmt(static_cast<double>(dev));
    } else if (name == "noniid-coverage") {
        std::vector<std::size_t> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        auto cls = noniid_classes(perm, 10, 2);
        std::vector<bool> seen(10, false);
        for (const auto& c : cls)
            for (auto x : c) seen[x] = true;
        os << "covered=" << std::count(seen.begin(), seen.end(), true);
    } else if (name == "matching-negated") {
        // rows u_i * v with u > 0, scored against the negated layer
        Vec v{0.3, -1.2, 0.7, 2.0}, u{1.0, 0.5, 3.0};
        Vec scores;
        for (double ui : u)
            for (double uj : u) {
                Vec a, b;
                for (double x : v) {
                    a.push_back(ui * x);
                    b.push_back(-uj * x);
                }
                scores.push_back(pcc_raw(a, b));
            }
        os << fmt(best_assignment_mean(scores, 3));
    } else if (name == "dilution") {
        os << fmt(0.8 * 20.0 * 1.0 / 10.0);
    } else {
        throw std::invalid_argument("unknown oracle case: " + name);
    }
    return os.str();
}

}  // namespace fedfa::oracle
