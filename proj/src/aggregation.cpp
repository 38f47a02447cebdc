#include "fedfa/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "fedfa/error.hpp"
#include "fedfa/kernels.hpp"

namespace fedfa {

double sub95_norm(const Tensor& weights) { return l2_norm(percentile_filter(weights, 0.95)); }

double sub95_norm(const Layer& layer, bool include_bias) {
    if (!layer.is_linear()) throw Error("shape-error", "static-norm layers carry no weights");
    std::vector<double> pool(layer.weight.storage());
    if (include_bias) pool.insert(pool.end(), layer.bias.storage().begin(), layer.bias.storage().end());
    return l2_norm(percentile_filter(pool, 0.95));
}

double scaling_factor(const std::vector<double>& norms, std::size_t c) {
    if (norms.empty() || c >= norms.size()) throw Error("bad-index", "scaling_factor needs norms[c]");
    if (norms[c] == 0.0) return 1.0;
    const double mean = std::accumulate(norms.begin(), norms.end(), 0.0) / static_cast<double>(norms.size());
    return mean / norms[c];
}

double ScalingReport::max_alpha() const {
    double mx = 0.0;
    for (const auto& l : layers)
        for (double a : l.alphas) mx = std::max(mx, a);
    return mx;
}

double ScalingReport::min_alpha() const {
    double mn = INFINITY;
    for (const auto& l : layers)
        for (double a : l.alphas) mn = std::min(mn, a);
    return layers.empty() ? 0.0 : mn;
}

bool AggregationResult::complete() const {
    for (const auto& c : counts) {
        for (double v : c.weight.data())
            if (v != total_weight) return false;
        for (double v : c.bias.data())
            if (v != total_weight) return false;
    }
    return true;
}

Aggregator parse_aggregator(const std::string& name) {
    static const std::map<std::string, Aggregator> table = {
        {"fedfa", Aggregator::fedfa},       {"fedfa_depth_only", Aggregator::fedfa_depth_only},
        {"fedfa_width_only", Aggregator::fedfa_width_only}, {"heterofl", Aggregator::heterofl},
        {"flexifed", Aggregator::flexifed}, {"nefl", Aggregator::nefl},
        {"fedavg", Aggregator::fedavg},
    };
    auto it = table.find(name);
    if (it == table.end()) throw Error("bad-aggregator", "unknown aggregator '" + name + "'");
    return it->second;
}

const char* to_string(Aggregator a) {
    switch (a) {
        case Aggregator::fedfa: return "fedfa";
        case Aggregator::fedfa_depth_only: return "fedfa_depth_only";
        case Aggregator::fedfa_width_only: return "fedfa_width_only";
        case Aggregator::heterofl: return "heterofl";
        case Aggregator::flexifed: return "flexifed";
        case Aggregator::nefl: return "nefl";
        case Aggregator::fedavg: return "fedavg";
    }
    return "?";
}

namespace {

void check_updates(const std::vector<ClientUpdate>& updates, const Model& prev_global) {
    if (updates.empty()) throw Error("no-updates", "aggregation needs at least one update");
    for (const auto& u : updates) {
        if (!is_subarch(u.model.arch, prev_global.arch))
            throw Error("arch-exceeds-global", "client " + std::to_string(u.client_id) + " arch exceeds global");
        if (!(u.n_samples > 0.0)) throw Error("bad-sample-count", "n_samples must be positive");
    }
}

// Visits clients in ascending client_id so sums do not depend on the order
// updates arrive in.
std::vector<std::size_t> client_order(const std::vector<ClientUpdate>& updates) {
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return updates[a].client_id < updates[b].client_id; });
    return order;
}

// scale(g, o) gives the multiplier applied to client o's layer for global
// layer g; accepts(g, layer) filters which client layers contribute.
using ScaleFn = std::function<double(std::size_t global_layer, std::size_t client)>;
using AcceptFn = std::function<bool(const Layer& global_layer, const Layer& client_layer)>;

AggregationResult accumulate(const std::vector<const Model*>& models, const std::vector<ClientUpdate>& updates,
                             const Model& prev_global, const ScaleFn& scale, const AcceptFn& accepts) {
    const auto order = client_order(updates);
    AggregationResult res;
    res.global = prev_global;
    for (const auto& u : updates) res.total_weight += u.n_samples;

    std::vector<std::size_t> linear_layers;
    for (std::size_t li = 0; li < prev_global.layers.size(); ++li)
        if (prev_global.layers[li].is_linear()) linear_layers.push_back(li);
    res.counts.resize(linear_layers.size());

    const auto n_lin = static_cast<std::ptrdiff_t>(linear_layers.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::num_threads()) if (kernels::num_threads() > 1)
    for (std::ptrdiff_t k = 0; k < n_lin; ++k) {
        const std::size_t gi = linear_layers[static_cast<std::size_t>(k)];
        const Layer& gl = prev_global.layers[gi];
        Tensor w_sum(gl.weight.shape()), w_cnt(gl.weight.shape());
        Tensor b_sum(gl.bias.shape()), b_cnt(gl.bias.shape());
        const std::size_t cols = gl.weight.cols();
        for (auto o : order) {
            const Layer* cl = models[o]->find(gl.key());
            if (cl == nullptr || !accepts(gl, *cl)) continue;
            const double n = updates[o].n_samples;
            const double s = n * scale(gi, o);
            kernels::accumulate_block(w_sum.data(), w_cnt.data(), cols, cl->weight.data(), cl->weight.rows(),
                                      cl->weight.cols(), s, n);
            kernels::accumulate_block(b_sum.data(), b_cnt.data(), 1, cl->bias.data(), cl->bias.size(), 1, s, n);
        }
        Layer& out = res.global.layers[gi];
        for (std::size_t i = 0; i < w_sum.size(); ++i)
            if (w_cnt[i] > 0.0) out.weight[i] = w_sum[i] / w_cnt[i];
        for (std::size_t i = 0; i < b_sum.size(); ++i)
            if (b_cnt[i] > 0.0) out.bias[i] = b_sum[i] / b_cnt[i];
        res.counts[static_cast<std::size_t>(k)] = {gl.key(), std::move(w_cnt), std::move(b_cnt)};
    }
    if (!res.global.all_finite()) throw Error("diverged", "aggregation produced non-finite weights");
    return res;
}

bool accept_any(const Layer&, const Layer&) { return true; }

AggregationResult fedfa_impl(const std::vector<ClientUpdate>& updates, const Model& prev_global,
                             const AggregationOptions& opts) {
    check_updates(updates, prev_global);
    const auto depths = depths_of(prev_global.arch);
    const auto widths = widths_of(prev_global.arch);

    std::vector<Model> grafted;
    grafted.reserve(updates.size());
    for (const auto& u : updates) {
        Model g = layer_graft(u.model, depths);
        if (opts.fedfa_width == WidthAlignment::filter_graft) g = filter_graft(g, widths, opts.filter_graft_mode);
        grafted.push_back(std::move(g));
    }
    std::vector<const Model*> ptrs;
    for (const auto& g : grafted) ptrs.push_back(&g);

    // alpha[layer][client]
    const auto order = client_order(updates);
    ScalingReport report;
    std::vector<std::vector<double>> alpha(prev_global.layers.size());
    for (std::size_t gi = 0; gi < prev_global.layers.size(); ++gi) {
        const Layer& gl = prev_global.layers[gi];
        if (!gl.is_linear()) continue;
        LayerScaling ls;
        ls.key = gl.key();
        // norms in ascending client_id order so the mean is order independent
        std::vector<double> norms;
        for (auto o : order) norms.push_back(sub95_norm(*grafted[o].find(gl.key()), opts.include_bias_in_norm));
        alpha[gi].resize(updates.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            alpha[gi][order[k]] = scaling_factor(norms, k);
            ls.client_ids.push_back(updates[order[k]].client_id);
            ls.alphas.push_back(alpha[gi][order[k]]);
        }
        ls.mean_norm = std::accumulate(norms.begin(), norms.end(), 0.0) / static_cast<double>(norms.size());
        ls.norms = std::move(norms);
        report.layers.push_back(std::move(ls));
    }

    auto res = accumulate(ptrs, updates, prev_global,
                          [&](std::size_t gi, std::size_t o) { return alpha[gi][o]; }, accept_any);
    res.scaling = std::move(report);
    return res;
}

AggregationResult partial_impl(const std::vector<ClientUpdate>& updates, const Model& prev_global,
                               const AcceptFn& accepts) {
    check_updates(updates, prev_global);
    std::vector<const Model*> ptrs;
    for (const auto& u : updates) ptrs.push_back(&u.model);
    return accumulate(ptrs, updates, prev_global, [](std::size_t, std::size_t) { return 1.0; }, accepts);
}

}  // namespace

AggregationResult aggregate_fedfa(const std::vector<ClientUpdate>& updates, const Model& prev_global,
                                  const AggregationOptions& opts) {
    return fedfa_impl(updates, prev_global, opts);
}

AggregationResult aggregate_heterofl(const std::vector<ClientUpdate>& updates, const Model& prev_global) {
    return partial_impl(updates, prev_global, accept_any);
}

AggregationResult aggregate_flexifed(const std::vector<ClientUpdate>& updates, const Model& prev_global) {
    return partial_impl(updates, prev_global, [](const Layer& g, const Layer& c) {
        return g.weight.shape() == c.weight.shape();
    });
}

AggregationResult aggregate_nefl(const std::vector<ClientUpdate>& updates, const Model& prev_global) {
    return partial_impl(updates, prev_global, accept_any);
}

AggregationResult aggregate_fedavg(const std::vector<ClientUpdate>& updates, const Model& prev_global) {
    check_updates(updates, prev_global);
    for (const auto& u : updates)
        if (!u.model.arch.same_shape(prev_global.arch))
            throw Error("arch-mismatch", "fedavg requires every client to use the global arch");
    return partial_impl(updates, prev_global, accept_any);
}

AggregationResult aggregate(Aggregator which, const std::vector<ClientUpdate>& updates, const Model& prev_global,
                            const AggregationOptions& opts) {
    switch (which) {
        case Aggregator::fedfa: return aggregate_fedfa(updates, prev_global, opts);
        case Aggregator::fedfa_depth_only:
            for (const auto& u : updates)
                if (widths_of(u.model.arch) != widths_of(prev_global.arch))
                    throw Error("variant-mismatch", "fedfa_depth_only needs every client at the global widths");
            return aggregate_fedfa(updates, prev_global, opts);
        case Aggregator::fedfa_width_only:
            for (const auto& u : updates)
                if (depths_of(u.model.arch) != depths_of(prev_global.arch))
                    throw Error("variant-mismatch", "fedfa_width_only needs every client at the global depths");
            return aggregate_fedfa(updates, prev_global, opts);
        case Aggregator::heterofl: return aggregate_heterofl(updates, prev_global);
        case Aggregator::flexifed: return aggregate_flexifed(updates, prev_global);
        case Aggregator::nefl: return aggregate_nefl(updates, prev_global);
        case Aggregator::fedavg: return aggregate_fedavg(updates, prev_global);
    }
    throw Error("bad-aggregator", "unhandled aggregator");
}

}  // namespace fedfa
