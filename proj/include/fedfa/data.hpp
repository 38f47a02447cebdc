#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfa/tensor.hpp"

namespace fedfa {

struct Dataset {
    Tensor inputs;                    // [n, dim]
    std::vector<std::size_t> labels;  // n entries, each < n_classes
    std::size_t n_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

void validate(const Dataset& ds);

struct Shard {
    int client_id = 0;
    Dataset data;
    std::vector<std::size_t> active_classes;  // sorted
    std::vector<std::size_t> source_indices;  // rows of the parent dataset
};

struct Partition {
    std::vector<Shard> shards;
    std::vector<std::size_t> unused;  // remainder pool, parent indices
};

// Class c is centred at 3 * u_c with u_c a seeded unit vector; samples add
// isotropic Gaussian noise of std `spread`. Rows are grouped by class.
Dataset gen_gaussian_blobs(std::size_t n_classes, std::size_t dim, std::size_t n_per_class,
                           double spread, std::uint64_t seed);

// Same class layout as gen_gaussian_blobs but sampled with a different
// noise stream, for held-out evaluation data.
Dataset gen_gaussian_blobs_split(std::size_t n_classes, std::size_t dim, std::size_t n_per_class,
                                 double spread, std::uint64_t seed, std::uint64_t split);

// Every client sees every class; client sizes are drawn uniformly from
// [ceil(max/2), max] so that 2 * min >= max, and samples are dealt out
// class-stratified from a seeded permutation.
Partition partition_iid(const Dataset& ds, std::size_t n_clients, std::uint64_t seed);

// Each shard holds k = ceil(class_fraction * n_classes) classes with equal
// per-class counts; classes are dealt round-robin over a seeded permutation.
Partition partition_noniid(const Dataset& ds, std::size_t n_clients, double class_fraction,
                           std::uint64_t seed);

struct TestSets {
    Dataset global;
    std::vector<Dataset> local;  // one per shard, restricted to its classes
};

TestSets make_test_sets(const Dataset& test, const std::vector<Shard>& shards);

void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset read_dataset_csv(const std::string& path, std::size_t n_classes = 0);

}  // namespace fedfa
