#include "fedfa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedfa/error.hpp"
#include "fedfa/kernels.hpp"
#include "fedfa/rng.hpp"

namespace fedfa {

namespace {

std::vector<bool> class_mask(std::size_t n_classes, const std::vector<std::size_t>& active) {
    std::vector<bool> mask(n_classes, active.empty());
    for (auto c : active) {
        if (c >= n_classes) throw Error("shape-error", "active class out of range");
        mask[c] = true;
    }
    return mask;
}

// Per-layer activations kept for the backward pass.
struct Trace {
    std::vector<Tensor> input;  // input to each layer
    std::vector<Tensor> pre;    // pre-activation (linear output, or normalized value)
};

Tensor linear(const Layer& l, const Tensor& x) {
    const kernels::LinearDims d{x.rows(), l.weight.cols(), l.weight.rows()};
    Tensor y({d.batch, d.out});
    kernels::linear_forward(x.data(), l.weight.data(), l.bias.data(), y.data(), d);
    return y;
}

Tensor run_forward(const Model& m, const Tensor& inputs, Trace* trace) {
    if (inputs.rank() != 2 || inputs.cols() != m.arch.input_dim)
        throw Error("shape-error", "inputs must be [n, input_dim]");
    const std::size_t n_layers = m.layers.size();
    if (trace) {
        trace->input.resize(n_layers);
        trace->pre.resize(n_layers);
    }
    Tensor h = inputs;
    for (std::size_t li = 0; li < n_layers; ++li) {
        const Layer& l = m.layers[li];
        if (trace) trace->input[li] = h;
        switch (l.kind) {
            case LayerKind::entry:
            case LayerKind::output:
                h = linear(l, h);
                if (trace) trace->pre[li] = h;
                break;
            case LayerKind::static_norm: {
                const std::size_t w = h.cols();
                for (std::size_t r = 0; r < h.rows(); ++r)
                    for (std::size_t c = 0; c < w; ++c)
                        h.at(r, c) = (h.at(r, c) - (*l.norm_mean)[c]) / (*l.norm_std)[c];
                if (trace) trace->pre[li] = h;
                for (auto& v : h.data()) v = std::max(v, 0.0);
                break;
            }
            case LayerKind::block: {
                Tensor z = linear(l, h);
                if (trace) trace->pre[li] = z;
                for (std::size_t i = 0; i < h.size(); ++i) h[i] += std::max(z[i], 0.0);
                break;
            }
        }
    }
    return h;
}

void apply_mask(Tensor& logits, const std::vector<bool>& mask) {
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t c = 0; c < logits.cols(); ++c)
            if (!mask[c]) logits.at(r, c) = kMaskedLogit;
}

void check_batch(const Model& m, const Batch& b) {
    if (b.labels.empty()) throw Error("empty-batch", "batch has no samples");
    if (b.inputs.rank() != 2 || b.inputs.rows() != b.labels.size())
        throw Error("shape-error", "batch inputs and labels disagree");
    for (auto y : b.labels)
        if (y >= m.arch.output_dim) throw Error("shape-error", "label out of range");
}

// Softmax probabilities minus one-hot, divided by n; returns the mean loss.
double softmax_xent_grad(const Tensor& logits, const std::vector<std::size_t>& labels,
                         const std::vector<bool>& mask, Tensor* dlogits) {
    const std::size_t n = logits.rows();
    const std::size_t k = logits.cols();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double mx = -INFINITY;
        for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, logits.at(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(logits.at(r, c) - mx);
        const double log_z = mx + std::log(z);
        total += log_z - logits.at(r, labels[r]);
        if (dlogits) {
            for (std::size_t c = 0; c < k; ++c) {
                double p = mask[c] ? std::exp(logits.at(r, c) - log_z) : 0.0;
                if (c == labels[r]) p -= 1.0;
                dlogits->at(r, c) = mask[c] ? p / static_cast<double>(n) : 0.0;
            }
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace

Gradients Gradients::zeros_like(const Model& m) {
    Gradients g;
    for (const auto& l : m.layers) {
        if (l.is_linear()) g.layers.push_back({Tensor(l.weight.shape()), Tensor(l.bias.shape())});
        else g.layers.push_back({});
    }
    return g;
}

Tensor forward(const Model& m, const Tensor& inputs, const std::vector<std::size_t>& active_classes) {
    const auto mask = class_mask(m.arch.output_dim, active_classes);
    Tensor logits = run_forward(m, inputs, nullptr);
    if (!active_classes.empty()) apply_mask(logits, mask);
    return logits;
}

double loss(const Model& m, const Batch& batch) {
    check_batch(m, batch);
    const auto mask = class_mask(m.arch.output_dim, batch.active_classes);
    Tensor logits = run_forward(m, batch.inputs, nullptr);
    apply_mask(logits, mask);
    return softmax_xent_grad(logits, batch.labels, mask, nullptr);
}

LossGrad loss_and_grad(const Model& m, const Batch& batch) {
    check_batch(m, batch);
    const auto mask = class_mask(m.arch.output_dim, batch.active_classes);
    Trace trace;
    Tensor logits = run_forward(m, batch.inputs, &trace);
    apply_mask(logits, mask);
    Tensor delta(logits.shape());
    LossGrad out{softmax_xent_grad(logits, batch.labels, mask, &delta), Gradients::zeros_like(m)};

    const std::size_t n = batch.labels.size();
    // `delta` holds dL/d(output of layer li) while walking backwards.
    for (std::size_t li = m.layers.size(); li-- > 0;) {
        const Layer& l = m.layers[li];
        const Tensor& x = trace.input[li];
        auto& g = out.grads.layers[li];
        switch (l.kind) {
            case LayerKind::output:
            case LayerKind::entry: {
                const kernels::LinearDims d{n, l.weight.cols(), l.weight.rows()};
                kernels::linear_backward_params(delta.data(), x.data(), g.weight.data(), g.bias.data(), d);
                if (li == 0) break;
                Tensor dx({n, d.in});
                kernels::linear_backward_input(delta.data(), l.weight.data(), dx.data(), d);
                delta = std::move(dx);
                break;
            }
            case LayerKind::static_norm: {
                // delta is dL/d relu(u); map back to dL/dz with u = (z - mean) / std.
                const Tensor& u = trace.pre[li];
                const std::size_t w = u.cols();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < w; ++c)
                        delta.at(r, c) = u.at(r, c) > 0.0 ? delta.at(r, c) / (*l.norm_std)[c] : 0.0;
                break;
            }
            case LayerKind::block: {
                const Tensor& z = trace.pre[li];
                Tensor dz(z.shape());
                for (std::size_t i = 0; i < z.size(); ++i) dz[i] = z[i] > 0.0 ? delta[i] : 0.0;
                const kernels::LinearDims d{n, l.weight.cols(), l.weight.rows()};
                kernels::linear_backward_params(dz.data(), x.data(), g.weight.data(), g.bias.data(), d);
                Tensor dx({n, d.in});
                kernels::linear_backward_input(dz.data(), l.weight.data(), dx.data(), d);
                delta += dx;  // skip path
                break;
            }
        }
    }
    return out;
}

void apply_sgd_step(Model& m, const Gradients& g, double lr) {
    if (g.layers.size() != m.layers.size()) throw Error("shape-error", "gradient/model layer mismatch");
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        auto& l = m.layers[li];
        if (!l.is_linear()) continue;
        const auto& gl = g.layers[li];
        if (gl.weight.shape() != l.weight.shape() || gl.bias.shape() != l.bias.shape())
            throw Error("shape-error", "gradient shape mismatch");
        for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] -= lr * gl.weight[i];
        for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * gl.bias[i];
    }
}

Model local_update(const Model& m, const Shard& shard, const SgdConfig& cfg, std::uint64_t seed) {
    if (!(cfg.lr > 0.0)) throw Error("bad-lr", "learning rate must be positive");
    if (shard.data.size() == 0) throw Error("empty-batch", "shard is empty");
    if (cfg.batch_size == 0) throw Error("bad-batch-size", "batch size must be positive");
    Model out = m;
    const std::size_t n = shard.data.size();
    const std::size_t d = shard.data.dim();
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, {e}));
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            Batch b;
            b.inputs = Tensor({len, d});
            b.active_classes = shard.active_classes;
            for (std::size_t i = 0; i < len; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(shard.data.inputs.data().begin() + static_cast<std::ptrdiff_t>(src * d), d,
                            b.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * d));
                b.labels.push_back(shard.data.labels[src]);
            }
            apply_sgd_step(out, loss_and_grad(out, b).grads, cfg.lr);
        }
    }
    if (!out.all_finite()) throw Error("diverged", "local training produced non-finite weights");
    return out;
}

double accuracy(const Model& m, const Dataset& ds, const std::vector<std::size_t>& active_classes) {
    if (ds.size() == 0) return 0.0;
    const Tensor logits = forward(m, ds.inputs, active_classes);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits.at(r, c) > logits.at(r, best)) best = c;
        correct += best == ds.labels[r] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace fedfa
