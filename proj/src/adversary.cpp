#include "fedfa/adversary.hpp"

#include <cmath>
#include <numeric>

#include "fedfa/error.hpp"
#include "fedfa/rng.hpp"

namespace fedfa {

AttackMode parse_attack_mode(const std::string& s) {
    if (s == "label_shuffle") return AttackMode::label_shuffle;
    if (s == "additive_backdoor") return AttackMode::additive_backdoor;
    if (s == "both") return AttackMode::both;
    throw Error("bad-config", "unknown attack mode '" + s + "'");
}

const char* to_string(AttackMode m) {
    switch (m) {
        case AttackMode::label_shuffle: return "label_shuffle";
        case AttackMode::additive_backdoor: return "additive_backdoor";
        case AttackMode::both: return "both";
    }
    return "?";
}

std::size_t malicious_count(const AttackConfig& cfg, std::size_t n_clients) {
    if (!(cfg.fraction_malicious >= 0.0 && cfg.fraction_malicious <= 1.0))
        throw Error("bad-config", "fraction_malicious must lie in [0, 1]");
    return static_cast<std::size_t>(std::llround(cfg.fraction_malicious * static_cast<double>(n_clients)));
}

Model backdoor_update(const Model& benign, const Model& prev_global, const Gradients& backdoor_delta,
                      double lambda) {
    if (!benign.arch.same_shape(prev_global.arch) || benign.layers.size() != prev_global.layers.size() ||
        backdoor_delta.layers.size() != benign.layers.size())
        throw Error("shape-error", "backdoor_update operands are not congruent");
    Model out = prev_global;
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
        auto& l = out.layers[li];
        if (!l.is_linear()) continue;
        const auto& b = benign.layers[li];
        const auto& d = backdoor_delta.layers[li];
        if (b.weight.shape() != l.weight.shape() || d.weight.shape() != l.weight.shape() ||
            d.bias.shape() != l.bias.shape())
            throw Error("shape-error", "backdoor delta shape mismatch");
        for (std::size_t i = 0; i < l.weight.size(); ++i)
            l.weight[i] = l.weight[i] + (b.weight[i] - l.weight[i]) + lambda * d.weight[i];
        for (std::size_t i = 0; i < l.bias.size(); ++i)
            l.bias[i] = l.bias[i] + (b.bias[i] - l.bias[i]) + lambda * d.bias[i];
    }
    return out;
}

Gradients default_backdoor_delta(const Model& m, std::size_t target_class) {
    if (target_class >= m.arch.output_dim) throw Error("bad-config", "backdoor target class out of range");
    Gradients g = Gradients::zeros_like(m);
    g.layers.back().bias[target_class] = 1.0;
    return g;
}

Shard shuffle_labels(const Shard& shard, std::uint64_t seed) {
    if (shard.data.size() == 0) throw Error("empty-batch", "cannot shuffle an empty shard");
    Shard out = shard;
    const auto& labels = shard.data.labels;
    bool varied = false;
    for (auto y : labels) varied |= y != labels.front();
    if (!varied) return out;

    Rng rng(derive_seed(seed, {0x5A0FFULL}));
    std::vector<std::size_t> perm(labels.size());
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        bool moved = false;
        for (std::size_t i = 0; i < perm.size(); ++i) moved |= labels[perm[i]] != labels[i];
        if (moved) break;
    }
    for (std::size_t i = 0; i < perm.size(); ++i) out.data.labels[i] = labels[perm[i]];
    return out;
}

ArchSpec malicious_arch_choice(const std::vector<ArchSpec>& candidates) {
    if (candidates.empty()) throw Error("bad-arch", "no candidate architectures");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (param_count(candidates[i]) > param_count(candidates[best])) best = i;
    return candidates[best];
}

}  // namespace fedfa
