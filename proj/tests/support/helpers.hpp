#pragma once

#include <string>
#include <vector>

#include "fedfa/data.hpp"
#include "fedfa/error.hpp"
#include "fedfa/model.hpp"
#include "fedfa/rng.hpp"

namespace fedfa::test {

inline ArchSpec arch_of(std::size_t in, std::size_t out, std::vector<SectionSpec> secs) {
    ArchSpec a;
    a.input_dim = in;
    a.output_dim = out;
    a.sections = std::move(secs);
    return a;
}

template <typename Fn>
std::string error_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Tensor t({rows, cols});
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

// Built model with every linear parameter (biases included) redrawn from
// N(0, scale^2), so no entry is structurally zero.
inline Model randomized_model(const ArchSpec& arch, std::uint64_t seed, double scale = 0.5) {
    Model m = build_model(arch, seed);
    Rng rng(seed ^ 0x5bd1e995ULL);
    for (auto& l : m.layers) {
        if (!l.is_linear()) continue;
        for (auto& v : l.weight.data()) v = scale * rng.normal();
        for (auto& v : l.bias.data()) v = scale * rng.normal();
    }
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

}  // namespace fedfa::test
