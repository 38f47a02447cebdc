#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "fedfa/analysis.hpp"
#include "fedfa/grafting.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fedfa;
using test::arch_of;
using test::error_code;

namespace {

std::vector<double> unit_variance(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.normal();
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (auto& v : y) v = (v - mean) / sd;
    return y;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
    Tensor out(t.shape());
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(perm[r], c);
    return out;
}

}  // namespace

TEST(Pcc, BasicCases) {
    std::vector<double> a{1, 2, 3, 5};
    std::vector<double> neg{-1, -2, -3, -5};
    EXPECT_DOUBLE_EQ(pcc(a, a), 1.0);
    EXPECT_DOUBLE_EQ(pcc(a, neg), -1.0);
    const std::vector<double> x{1, 2, 3}, y{1, 2, 4};
    EXPECT_NEAR(pcc(x, y), oracle::pcc_raw(x, y), 1e-15);
    EXPECT_NEAR(pcc(x, y), std::sqrt(27.0 / 28.0), 1e-15);
    std::vector<double> flat{2, 2, 2};
    EXPECT_EQ(error_code([&] { pcc(flat, x); }), "degenerate-vector");
}

TEST(Pcc, MatchesRawSumOracle) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(2 + rng.below(30)), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.normal();
            b[i] = 0.5 * a[i] + rng.normal();
        }
        EXPECT_NEAR(pcc(a, b), oracle::pcc_raw(a, b), 1e-12);
    }
}

TEST(GreedyMatch, OneToOneAndAscendingRows) {
    // row 0 takes col 1; row 1's best (col 1) is taken, so it gets col 0
    const std::vector<double> s{0.1, 0.9, 0.0, 0.2, 0.8, 0.3, 0.5, 0.7, 0.4};
    const auto m = greedy_match(s, 3, 3);
    EXPECT_EQ(m.column_of_row, (std::vector<long>{1, 2, 0}));
    EXPECT_NEAR(m.mean, (0.9 + 0.3 + 0.5) / 3, 1e-15);
    std::vector<long> cols = m.column_of_row;
    std::sort(cols.begin(), cols.end());
    EXPECT_EQ(std::unique(cols.begin(), cols.end()), cols.end());
}

TEST(GreedyMatch, NeverBeatsExhaustiveOptimum) {
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(6);
        std::vector<double> s(n * n);
        for (auto& v : s) v = rng.uniform(-1, 1);
        EXPECT_LE(greedy_match(s, n, n).mean, oracle::best_assignment_mean(s, n) + 1e-15);
    }
}

TEST(LayerSimilarity, SelfAndPermutation) {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const Tensor w = test::random_matrix(2 + rng.below(7), 3 + rng.below(6), rng);
        EXPECT_NEAR(layer_similarity(w, w), 1.0, 1e-12);
        std::vector<std::size_t> perm(w.rows());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        const Tensor p = permute_rows(w, perm);
        EXPECT_NEAR(layer_similarity(w, p), 1.0, 1e-12);
        EXPECT_NEAR(layer_similarity(p, w), layer_similarity(w, p), 1e-9);
        const auto ls = layer_similarity(FilterBank::from_linear(w), FilterBank::from_linear(p));
        for (std::size_t r = 0; r < w.rows(); ++r) EXPECT_EQ(perm[static_cast<std::size_t>(ls.filters.column_of_row[r])], r);
    }
}

TEST(LayerSimilarity, NegatedRankOneLayer) {
    const std::vector<double> v{0.3, -1.2, 0.7, 2.0}, u{1.0, 0.5, 3.0};
    Tensor w({3, 4});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) w.at(r, c) = u[r] * v[c];
    const double got = layer_similarity(w, w * -1.0);
    EXPECT_NEAR(got, -1.0, 1e-12);
    // exhaustive optimum over all assignments agrees
    std::vector<double> scores;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const auto a = std::vector<double>(w.storage().begin() + 4 * i, w.storage().begin() + 4 * i + 4);
            auto b = std::vector<double>(w.storage().begin() + 4 * j, w.storage().begin() + 4 * j + 4);
            for (auto& x : b) x = -x;
            scores.push_back(oracle::pcc_raw(a, b));
        }
    EXPECT_NEAR(got, oracle::best_assignment_mean(scores, 3), 1e-12);
}

TEST(LayerSimilarity, GeneralNegationIsAtMostMinusSelf) {
    // with a full-rank layer the greedy matching still finds -1 on the diagonal
    Rng rng(5);
    const Tensor w = test::random_matrix(4, 6, rng);
    const double s = layer_similarity(w, w * -1.0);
    EXPECT_GE(s, -1.0 - 1e-12);
    EXPECT_LE(s, 1.0);
}

TEST(LayerSimilarity, DegenerateLayer) {
    EXPECT_EQ(error_code([] { layer_similarity(Tensor({3, 4}, 1.0), Tensor({3, 4}, 2.0)); }), "degenerate-layer");
}

TEST(LayerSimilarity, TwoLevelBank) {
    // filters with two maps each; swapping maps inside a filter is recovered
    FilterBank a{2, 2, 3, {1, 2, 4, -1, 0, 3, 5, 1, 2, 2, 8, 1}};
    FilterBank b = a;
    for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t k = 0; k < 3; ++k) std::swap(b.values[f * 6 + k], b.values[f * 6 + 3 + k]);
    EXPECT_NEAR(layer_similarity(a, b).similarity, 1.0, 1e-12);
}

TEST(SectionTable, ShapesAndGraftedBlocks) {
    const Model single = test::randomized_model(arch_of(3, 2, {{1, 4}, {2, 3}}), 1);
    EXPECT_TRUE(section_similarity_table(single, "e0").empty());
    const Model g = layer_graft(single, {4, 3});
    const auto rows = section_similarity_table(g, "e0");
    // section 0: blocks 1..3, three pairs; section 1: blocks 1..2, one pair
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_GE(r.block_i, 1);
        EXPECT_LT(r.block_i, r.block_j);
        EXPECT_NEAR(r.similarity, 1.0, 1e-12);
    }
    std::ostringstream os;
    write_similarity_csv(rows, os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "section,block_i,block_j,epoch_tag,similarity");
}

TEST(ScaleMetrics, OraclesAndTriangle) {
    const Model a = test::randomized_model(arch_of(3, 2, {{1, 3}}), 1);
    const Model b = test::randomized_model(arch_of(3, 2, {{2, 5}}), 2);
    const Model c = test::randomized_model(arch_of(3, 2, {{2, 6}}), 3);
    for (const auto& r : scale_metrics(a, a)) EXPECT_EQ(r.avg_distance, 0.0);

    const auto rows = scale_metrics(a, b);
    std::size_t k = 0;
    for (const auto& l : a.layers) {
        if (!l.is_linear()) continue;
        const Layer* o = b.find(l.key());
        const auto cut = oracle::leading_block(o->weight.storage(), o->weight.rows(), o->weight.cols(), l.weight.rows(),
                                               l.weight.cols());
        double mag = 0, dist = 0;
        for (std::size_t i = 0; i < cut.size(); ++i) {
            mag += std::abs(l.weight[i]);
            dist += std::abs(l.weight[i] - cut[i]);
        }
        EXPECT_NEAR(rows[k].avg_magnitude, mag / static_cast<double>(cut.size()), 1e-14);
        EXPECT_NEAR(rows[k].avg_distance, dist / static_cast<double>(cut.size()), 1e-14);
        ++k;
    }

    Model zero = a;
    for (auto& l : zero.layers)
        if (l.is_linear()) l.weight = Tensor(l.weight.shape(), 0.0);
    const auto zrows = scale_metrics(zero, b);
    for (std::size_t i = 0; i < zrows.size(); ++i) {
        const Tensor& ow = b.find(zrows[i].key)->weight;
        const Tensor& zw = zero.find(zrows[i].key)->weight;
        const Tensor cut = slice2d(ow, zw.rows(), zw.cols());
        double mag = 0;
        for (double v : cut.data()) mag += std::abs(v);
        EXPECT_NEAR(zrows[i].avg_distance, mag / static_cast<double>(cut.size()), 1e-14);
    }

    // d(a, c) <= d(a, b) + d(b, c) on a's region
    const Model b_cut = extract_submodel(b, a.arch);
    const auto ac = scale_metrics(a, c), ab = scale_metrics(a, b_cut);
    const auto bc = scale_metrics(b_cut, c);
    for (std::size_t i = 0; i < ac.size(); ++i)
        EXPECT_LE(ac[i].avg_distance, ab[i].avg_distance + bc[i].avg_distance + 1e-14);
    EXPECT_EQ(error_code([&] { scale_metrics(b, a); }), "not-a-submodel");
}

TEST(Variance, ConstantModelAndIdenticalSnapshots) {
    Model m = build_model(arch_of(3, 4, {{1, 5}}), 1);
    m.layers.back().weight = Tensor(m.layers.back().weight.shape(), 0.0);
    Rng rng(1);
    const Tensor x = test::random_matrix(20, 3, rng);
    EXPECT_EQ(logit_variance(m, x), 0.0);
    const Model r = test::randomized_model(m.arch, 3);
    const auto s = logit_variance_rate({r, r, r}, x, 2);
    EXPECT_EQ(s.rate, 0.0);
    EXPECT_EQ(s.variance.size(), 3u);
    const auto g = variance_rate_from_series({0.0, 1.0, 3.0, 10.0}, 2);
    EXPECT_DOUBLE_EQ(g.rate, 1.5);
}

TEST(Macs, ClosedForms) {
    const std::vector<LayerShape> one{{{LayerKind::output, 0, -1}, 3, 2}};
    EXPECT_EQ(macs_per_epoch(one, 10), oracle::macs({{3, 2}}, 10, kMacPassFactor));
    EXPECT_EQ(macs_per_epoch(one, 10), 180.0);
    EXPECT_EQ(macs_per_epoch(one, 20), 360.0);
    const ArchSpec a = arch_of(2, 3, {{1, 4}});
    EXPECT_EQ(macs_per_epoch(a, 7), oracle::macs({{4, 2}, {4, 4}, {3, 4}}, 7, 3));
    EXPECT_EQ(mac_estimate(a, 7, 2, 0, 5).tmac, 0.0);
    const auto e = mac_estimate(a, 7, 2, 3, 5);
    EXPECT_EQ(e.mace, 5 * e.macs);
    EXPECT_EQ(e.tmac, 3 * 2 * e.mace);
    const auto h = mac_estimate({a, arch_of(2, 3, {{2, 4}})}, {7, 7}, 1, 1);
    EXPECT_EQ(h.macs, 0.5 * (macs_per_epoch(a, 7) + macs_per_epoch(arch_of(2, 3, {{2, 4}}), 7)));
}

TEST(BatchNorm, ScaleNegation) {
    const auto y = unit_variance(64, 2);
    for (double alpha : {0.5, 1.0, 2.0, 20.0}) EXPECT_EQ(bn_scale_check(y, alpha, 0.0), 0.0);
    EXPECT_EQ(bn_scale_check(y, 1.0, 1e-5), 0.0);
    const double dev = bn_scale_check(y, 20.0, 1e-5);
    EXPECT_LT(dev, 1e-4);
    // direct route through batch_norm, and the long double oracle
    std::vector<double> scaled(y);
    for (auto& v : scaled) v *= 20.0;
    const auto a = batch_norm(y, 1e-5), b = batch_norm(scaled, 1e-5);
    const auto la = oracle::batch_norm_ld(y, 1e-5L), lb = oracle::batch_norm_ld(scaled, 1e-5L);
    double direct = 0, ref = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        direct = std::max(direct, std::abs(a[i] - b[i]));
        ref = std::max(ref, static_cast<double>(std::fabs(la[i] - lb[i])));
    }
    EXPECT_NEAR(dev, ref, 1e-12);
    EXPECT_NEAR(direct, ref, 1e-12);
    EXPECT_EQ(error_code([&] { bn_scale_check(y, 0.0, 0.0); }), "bad-alpha");
}

TEST(BatchNorm, ZeroEpsExactForRandomInputs) {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> y(2 + rng.below(50));
        for (auto& v : y) v = rng.uniform(-100, 100);
        EXPECT_EQ(bn_scale_check(y, 0.01 + 50 * rng.uniform(), 0.0), 0.0);
    }
}

TEST(Convergence, MaxAlphaPerRound) {
    ScalingReport equal;
    equal.layers.push_back({{LayerKind::block, 0, 0}, {0, 1}, {2, 2}, {1, 1}, 2});
    ScalingReport skew;
    skew.layers.push_back({{LayerKind::block, 0, 0}, {0, 1}, {1, 4}, {scaling_factor({1, 4}, 0), scaling_factor({1, 4}, 1)}, 2.5});
    const auto d = convergence_diagnostic({equal, skew, equal});
    ASSERT_EQ(d.max_alpha.size(), 3u);
    EXPECT_EQ(d.max_alpha[0], 1.0);
    EXPECT_DOUBLE_EQ(d.max_alpha[1], 2.5);
    EXPECT_TRUE(d.in_band);
    ScalingReport wild;
    wild.layers.push_back({{LayerKind::block, 0, 0}, {0, 1}, {1, 100}, {50.5, 0.505}, 50.5});
    EXPECT_FALSE(convergence_diagnostic({wild}).in_band);
}
