#pragma once

#include <cstdint>
#include <vector>

#include "fedfa/data.hpp"
#include "fedfa/model.hpp"

namespace fedfa {

// Logit assigned to classes outside a client's active set.
inline constexpr double kMaskedLogit = -1e9;

struct Batch {
    Tensor inputs;                            // [n, input_dim]
    std::vector<std::size_t> labels;
    std::vector<std::size_t> active_classes;  // empty = all classes active
};

struct LayerGrad {
    Tensor weight;  // absent for static_norm layers
    Tensor bias;
};

struct Gradients {
    std::vector<LayerGrad> layers;  // parallel to Model::layers

    static Gradients zeros_like(const Model& m);
};

// Section entry: relu(norm(Wx + b)); block: relu(Wx + b) + x;
// output: Wx + b with inactive classes set to kMaskedLogit.
Tensor forward(const Model& m, const Tensor& inputs, const std::vector<std::size_t>& active_classes = {});

struct LossGrad {
    double loss;
    Gradients grads;
};

// Mean softmax cross-entropy and its exact gradient.
LossGrad loss_and_grad(const Model& m, const Batch& batch);
double loss(const Model& m, const Batch& batch);

struct SgdConfig {
    std::size_t epochs = 1;
    double lr = 0.05;
    std::size_t batch_size = 16;
};

// Minibatch SGD over the shard; epoch e visits samples in a Fisher-Yates
// order keyed by (seed, e). The input model is left untouched.
Model local_update(const Model& m, const Shard& shard, const SgdConfig& cfg, std::uint64_t seed);

void apply_sgd_step(Model& m, const Gradients& g, double lr);

double accuracy(const Model& m, const Dataset& ds, const std::vector<std::size_t>& active_classes = {});

}  // namespace fedfa
