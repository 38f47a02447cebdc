#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfa/data.hpp"
#include "fedfa/training.hpp"

namespace fedfa {

enum class AttackMode { label_shuffle, additive_backdoor, both };

AttackMode parse_attack_mode(const std::string& s);
const char* to_string(AttackMode m);

struct AttackConfig {
    double fraction_malicious = 0.0;
    double lambda = 0.0;
    AttackMode mode = AttackMode::both;
    std::size_t target_class = 0;
    std::uint64_t seed = 0;
};

std::size_t malicious_count(const AttackConfig& cfg, std::size_t n_clients);

// prev_global + (benign - prev_global) + lambda * delta.
Model backdoor_update(const Model& benign, const Model& prev_global, const Gradients& backdoor_delta,
                      double lambda);

// Default trigger: +1 on the output-layer bias of `target_class`, 0 elsewhere.
Gradients default_backdoor_delta(const Model& m, std::size_t target_class);

// Permutes labels within the shard (multiset preserved). Re-draws up to 100
// times until at least one label changes, when that is possible.
Shard shuffle_labels(const Shard& shard, std::uint64_t seed);

// Candidate with the most parameters; ties go to the earliest.
ArchSpec malicious_arch_choice(const std::vector<ArchSpec>& candidates);

}  // namespace fedfa
