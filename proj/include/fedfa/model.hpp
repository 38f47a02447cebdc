#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedfa/tensor.hpp"

namespace fedfa {

struct SectionSpec {
    std::size_t depth = 1;  // residual blocks
    std::size_t width = 1;  // hidden size shared by the section

    friend bool operator==(const SectionSpec&, const SectionSpec&) = default;
};

struct ArchSpec {
    std::size_t input_dim = 1;
    std::size_t output_dim = 1;
    std::vector<SectionSpec> sections;
    std::string seed_tag;

    // Structural equality; seed_tag is a label and does not participate.
    bool same_shape(const ArchSpec& other) const;
    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

// Throws Error("bad-arch") when the spec is not buildable.
void validate(const ArchSpec& arch);

// True when `sub` can be cut out of `super`: same section count and I/O
// dims, and depth/width no larger in every section.
bool is_subarch(const ArchSpec& sub, const ArchSpec& super);

// Section-wise maximum over a non-empty roster of compatible archs.
ArchSpec max_arch(const std::vector<ArchSpec>& archs);

std::size_t param_count(const ArchSpec& arch);

std::string to_canonical_json(const ArchSpec& arch);
ArchSpec arch_from_json(const std::string& text);

enum class LayerKind : std::uint8_t { entry, static_norm, block, output };

const char* to_string(LayerKind kind);

// Identifies corresponding layers across models of different depth/width.
struct LayerKey {
    LayerKind kind;
    int section;
    int block_index;  // -1 for non-block layers
    friend auto operator<=>(const LayerKey&, const LayerKey&) = default;
};

// entry / block / output layers are linear (weight [out, in], bias [out]).
// static_norm layers hold fixed per-unit statistics and have no trainable
// parameters; their weight and bias are absent tensors.
struct Layer {
    LayerKind kind = LayerKind::block;
    int section = 0;
    int block_index = -1;
    Tensor weight;
    Tensor bias;
    std::optional<Tensor> norm_mean;
    std::optional<Tensor> norm_std;

    LayerKey key() const { return {kind, section, block_index}; }
    bool is_linear() const { return kind != LayerKind::static_norm; }
    std::size_t out_dim() const;
    std::size_t in_dim() const;

    friend bool operator==(const Layer&, const Layer&) = default;
};

struct StaticNormConstants {
    double mean = 0.0;
    double std = 1.0;
};

// Layer order: for each section [entry, static_norm, block 0..depth-1],
// then the output layer.
struct Model {
    ArchSpec arch;
    std::vector<Layer> layers;

    const Layer* find(const LayerKey& key) const;
    Layer* find(const LayerKey& key);
    bool all_finite() const;

    friend bool operator==(const Model&, const Model&) = default;
};

// Skeleton layer keys and shapes for an arch, in model order.
struct LayerShape {
    LayerKey key;
    std::size_t out;
    std::size_t in;  // 0 for static_norm
};
std::vector<LayerShape> layer_shapes(const ArchSpec& arch);

Model build_model(const ArchSpec& arch, std::uint64_t seed, StaticNormConstants norm = {});

// Cuts `target` out of `global`: trailing blocks beyond the target depth are
// dropped per section, then every tensor is sliced to its leading block.
Model extract_submodel(const Model& global, const ArchSpec& target);

// Throws Error("shape-error") when layer shapes disagree with the arch.
void check_consistent(const Model& m);

std::vector<std::uint8_t> serialize_model(const Model& m);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace fedfa
