#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedfa/aggregation.hpp"
#include "fedfa/model.hpp"

namespace fedfa {

double pcc(std::span<const double> a, std::span<const double> b);

// A layer viewed as filters x weight maps x map length. Linear layers map to
// [out, 1, in]: each filter (row) is a single weight map.
struct FilterBank {
    std::size_t filters = 0;
    std::size_t maps = 0;
    std::size_t map_len = 0;
    std::vector<double> values;  // row-major [filters][maps][map_len]

    std::span<const double> map(std::size_t f, std::size_t k) const {
        return std::span<const double>(values).subspan((f * maps + k) * map_len, map_len);
    }
    static FilterBank from_linear(const Tensor& w);
};

struct Matching {
    std::vector<long> column_of_row;  // -1 when the row found no usable column
    double mean = 0.0;
    std::size_t matched = 0;
};

// Rows in ascending order each take their highest-scoring unused column
// (ties to the lowest column). NaN entries are unusable.
Matching greedy_match(const std::vector<double>& scores, std::size_t rows, std::size_t cols);

// Two-level greedy matching: weight maps within each filter pair produce
// r^ij, then filters are matched one-to-one on r^ij. Both banks are first
// cut to their common filter and map counts. Direction matters; see
// symmetric_layer_similarity.
struct LayerSimilarity {
    double similarity = 0.0;
    Matching filters;
};
LayerSimilarity layer_similarity(const FilterBank& a, const FilterBank& b);
double layer_similarity(const Tensor& a, const Tensor& b);

// Mean of both matching directions.
double symmetric_layer_similarity(const Tensor& a, const Tensor& b);

struct SimilarityRow {
    int section;
    int block_i;
    int block_j;
    std::string epoch_tag;
    double similarity;
};

// Pairwise similarity among the non-first residual blocks of each section.
std::vector<SimilarityRow> section_similarity_table(const Model& m, const std::string& epoch_tag);

struct ScaleRow {
    LayerKey key;
    double avg_magnitude;
    double avg_distance;
};

// Per linear layer of `baseline`: mean |w| and mean |w - other[:out, :in]|.
std::vector<ScaleRow> scale_metrics(const Model& baseline, const Model& other);

struct VarianceSeries {
    std::vector<double> variance;  // per snapshot
    double rate = 0.0;             // mean successive difference over the first K steps
};

double logit_variance(const Model& m, const Tensor& inputs);
VarianceSeries logit_variance_rate(const std::vector<Model>& snapshots, const Tensor& inputs, std::size_t k);
VarianceSeries variance_rate_from_series(std::vector<double> series, std::size_t k);

// Multiply-accumulates: forward, weight gradient and input gradient each cost
// out*in per sample.
inline constexpr std::size_t kMacPassFactor = 3;

struct MacEstimate {
    double macs = 0.0;  // one local epoch, mean over participants
    double mace = 0.0;  // one local epoch across participants
    double tmac = 0.0;  // whole experiment
};

double macs_per_epoch(const std::vector<LayerShape>& layers, std::size_t shard_size);
double macs_per_epoch(const ArchSpec& arch, std::size_t shard_size);
MacEstimate mac_estimate(const ArchSpec& arch, std::size_t shard_size, std::size_t epochs, std::size_t rounds,
                         std::size_t clients_per_round);
// Heterogeneous variant: one (arch, shard size) per participant.
MacEstimate mac_estimate(const std::vector<ArchSpec>& archs, const std::vector<std::size_t>& shard_sizes,
                         std::size_t epochs, std::size_t rounds);

// (v - mean) / sqrt(var + eps), population variance.
std::vector<double> batch_norm(std::span<const double> v, double eps);

// max |BN(alpha*y) - BN(y)|, evaluating BN(alpha*y) through the moment
// identities mean(alpha*y) = alpha*mean(y), var(alpha*y) = alpha^2*var(y).
double bn_scale_check(std::span<const double> y, double alpha, double eps);

struct ConvergenceDiagnostic {
    std::vector<double> max_alpha;  // one per round
    bool in_band = true;            // all within [kAlphaBandLow, kAlphaBandHigh]
};
inline constexpr double kAlphaBandLow = 0.05;
inline constexpr double kAlphaBandHigh = 20.0;

ConvergenceDiagnostic convergence_diagnostic(const std::vector<ScalingReport>& rounds);

void write_similarity_csv(const std::vector<SimilarityRow>& rows, std::ostream& out);
void write_scale_csv(const std::vector<ScaleRow>& rows, std::ostream& out);
void write_variance_csv(const VarianceSeries& s, std::ostream& out);

}  // namespace fedfa
