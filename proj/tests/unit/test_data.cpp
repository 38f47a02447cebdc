#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "fedfa/data.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fedfa;
using test::error_code;

namespace {

std::map<std::size_t, std::size_t> class_counts(const Dataset& ds) {
    std::map<std::size_t, std::size_t> m;
    for (auto y : ds.labels) ++m[y];
    return m;
}

void expect_exact_partition(const Partition& p, std::size_t n) {
    std::vector<int> seen(n, 0);
    for (const auto& s : p.shards)
        for (auto i : s.source_indices) ++seen.at(i);
    for (auto i : p.unused) ++seen.at(i);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(seen[i], 1) << i;
}

}  // namespace

TEST(Blobs, CountsAndDeterminism) {
    const Dataset ds = gen_gaussian_blobs(3, 4, 10, 1.0, 5);
    EXPECT_EQ(ds.size(), 30u);
    for (auto [c, n] : class_counts(ds)) EXPECT_EQ(n, 10u);
    EXPECT_EQ(gen_gaussian_blobs(3, 4, 10, 1.0, 5).inputs, ds.inputs);
    EXPECT_NE(gen_gaussian_blobs(3, 4, 10, 1.0, 6).inputs, ds.inputs);
}

TEST(Blobs, ZeroSpreadGivesCentresOfRadiusThree) {
    const Dataset ds = gen_gaussian_blobs(3, 5, 4, 0.0, 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        double n = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
            n += ds.inputs.at(i, k) * ds.inputs.at(i, k);
            const std::size_t first = ds.labels[i] * 4;
            EXPECT_EQ(ds.inputs.at(i, k), ds.inputs.at(first, k));
        }
        EXPECT_NEAR(std::sqrt(n), 3.0, 1e-12);
    }
}

TEST(Blobs, SplitSharesCentresNotNoise) {
    const Dataset a = gen_gaussian_blobs_split(2, 3, 5, 0.0, 4, 0);
    const Dataset b = gen_gaussian_blobs_split(2, 3, 5, 0.0, 4, 1);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_NE(gen_gaussian_blobs_split(2, 3, 5, 1.0, 4, 0).inputs, gen_gaussian_blobs_split(2, 3, 5, 1.0, 4, 1).inputs);
}

TEST(PartitionIid, SingleClientTakesAll) {
    const Dataset ds = gen_gaussian_blobs(4, 2, 7, 1.0, 1);
    const auto p = partition_iid(ds, 1, 3);
    ASSERT_EQ(p.shards.size(), 1u);
    EXPECT_EQ(p.shards[0].data.size(), ds.size());
    EXPECT_TRUE(p.unused.empty());
}

TEST(PartitionIid, HalfRuleAllClassesDisjoint) {
    const Dataset ds = gen_gaussian_blobs(8, 2, 50, 1.0, 1);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto p = partition_iid(ds, 10, seed);
        std::size_t mn = SIZE_MAX, mx = 0;
        for (const auto& s : p.shards) {
            mn = std::min(mn, s.data.size());
            mx = std::max(mx, s.data.size());
            EXPECT_EQ(s.active_classes.size(), 8u);
            EXPECT_EQ(class_counts(s.data).size(), 8u);
        }
        EXPECT_GE(2 * mn, mx);
        expect_exact_partition(p, ds.size());
    }
}

TEST(PartitionIid, TooFewSamples) {
    const Dataset ds = gen_gaussian_blobs(2, 2, 2, 1.0, 1);
    EXPECT_EQ(error_code([&] { partition_iid(ds, 5, 1); }), "too-few-samples");
}

TEST(PartitionNoniid, TwentyPercentRule) {
    const Dataset ds = gen_gaussian_blobs(10, 2, 40, 1.0, 1);
    const auto p = partition_noniid(ds, 10, 0.2, 3);
    std::set<std::size_t> covered;
    for (const auto& s : p.shards) {
        EXPECT_EQ(s.active_classes.size(), 2u);
        const auto counts = class_counts(s.data);
        EXPECT_EQ(counts.size(), 2u);
        EXPECT_EQ(counts.begin()->second, counts.rbegin()->second);
        covered.insert(s.active_classes.begin(), s.active_classes.end());
    }
    // same coverage as the round-robin oracle on the identity permutation
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::set<std::size_t> want;
    for (const auto& c : oracle::noniid_classes(perm, 10, 2)) want.insert(c.begin(), c.end());
    EXPECT_EQ(covered, want);
    EXPECT_EQ(covered.size(), 10u);
    expect_exact_partition(p, ds.size());
}

TEST(PartitionNoniid, EightClassesRoundsUp) {
    const Dataset ds = gen_gaussian_blobs(8, 2, 30, 1.0, 1);
    for (const auto& s : partition_noniid(ds, 20, 0.2, 4).shards) EXPECT_EQ(s.active_classes.size(), 2u);
}

TEST(TestSets, LocalTestsFollowShardClasses) {
    const Dataset train = gen_gaussian_blobs(10, 2, 40, 1.0, 1);
    const Dataset test = gen_gaussian_blobs_split(10, 2, 20, 1.0, 1, 1);
    const auto p = partition_noniid(train, 5, 0.2, 2);
    const auto ts = make_test_sets(test, p.shards);
    EXPECT_EQ(ts.global.size(), test.size());
    ASSERT_EQ(ts.local.size(), 5u);
    for (std::size_t c = 0; c < 5; ++c) {
        const auto counts = class_counts(ts.local[c]);
        std::vector<std::size_t> cls;
        for (auto [k, _] : counts) cls.push_back(k);
        EXPECT_EQ(cls, p.shards[c].active_classes);
    }
    const auto iid = make_test_sets(test, partition_iid(train, 4, 1).shards);
    for (const auto& l : iid.local) EXPECT_EQ(class_counts(l).size(), 10u);
}

TEST(DatasetCsv, RoundTrip) {
    const Dataset ds = gen_gaussian_blobs(3, 4, 5, 1.0, 8);
    const auto path = (std::filesystem::temp_directory_path() / "fedfa_ds_test.csv").string();
    write_dataset_csv(ds, path);
    const Dataset back = read_dataset_csv(path, 3);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.inputs, ds.inputs);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, "x0,x1,x2,x3,label");
    std::filesystem::remove(path);
}
