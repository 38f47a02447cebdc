#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedfa/grafting.hpp"
#include "fedfa/model.hpp"

namespace fedfa {

struct ClientUpdate {
    Model model;
    double n_samples = 1.0;  // N_D; 1 when sample counts are withheld
    int client_id = 0;
};

// L2 norm of the layer's weights (and bias, unless excluded) after dropping
// values at or above the 95th nearest-rank percentile of |w|.
double sub95_norm(const Tensor& weights);
double sub95_norm(const Layer& layer, bool include_bias = true);

// alpha_c = mean(norms) / norms[c]; 1 when norms[c] == 0.
double scaling_factor(const std::vector<double>& norms, std::size_t c);

struct LayerScaling {
    LayerKey key;
    std::vector<int> client_ids;
    std::vector<double> norms;
    std::vector<double> alphas;
    double mean_norm = 0.0;
};

struct ScalingReport {
    std::vector<LayerScaling> layers;  // global layer order, linear layers only

    double max_alpha() const;
    double min_alpha() const;
};

// Per-position contributor sums (gamma) for one global linear layer.
struct LayerCounts {
    LayerKey key;
    Tensor weight;
    Tensor bias;
};

struct AggregationResult {
    Model global;
    ScalingReport scaling;  // empty for aggregators without scaling
    std::vector<LayerCounts> counts;

    // True when every gamma entry of every layer equals the total sample weight.
    bool complete() const;
    double total_weight = 0.0;
};

enum class Aggregator {
    fedfa,
    fedfa_depth_only,
    fedfa_width_only,
    heterofl,
    flexifed,
    nefl,
    fedavg,
};

Aggregator parse_aggregator(const std::string& name);
const char* to_string(Aggregator a);

enum class WidthAlignment {
    slice,         // contiguous [:C_o, :C_I] accumulation
    filter_graft,  // widen client models to the global width first
};

struct AggregationOptions {
    bool include_bias_in_norm = true;
    WidthAlignment fedfa_width = WidthAlignment::slice;
    FilterGraftMode filter_graft_mode = FilterGraftMode::function_preserving;
};

// Layer grafting to the global depths, per-layer scaling by alpha, then
// slice accumulation of N_D * alpha * M into the global shape and division by
// the contributor sums. Positions nobody reaches keep prev_global's value.
AggregationResult aggregate_fedfa(const std::vector<ClientUpdate>& updates, const Model& prev_global,
                                  const AggregationOptions& opts = {});

// Baselines. None graft or scale.
// HeteroFL: slice-accumulate over each client's own width and depth.
AggregationResult aggregate_heterofl(const std::vector<ClientUpdate>& updates, const Model& prev_global);
// FlexiFed: per-block averaging over the clients that possess the block;
// a client shares a layer only when its shape equals the global layer's.
AggregationResult aggregate_flexifed(const std::vector<ClientUpdate>& updates, const Model& prev_global);
// NeFL: HeteroFL-style width slicing combined with FlexiFed-style depth sharing.
AggregationResult aggregate_nefl(const std::vector<ClientUpdate>& updates, const Model& prev_global);
// Plain weighted mean; every update must have the global arch.
AggregationResult aggregate_fedavg(const std::vector<ClientUpdate>& updates, const Model& prev_global);

AggregationResult aggregate(Aggregator which, const std::vector<ClientUpdate>& updates,
                            const Model& prev_global, const AggregationOptions& opts = {});

}  // namespace fedfa
