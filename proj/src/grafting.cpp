#include "fedfa/grafting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedfa/error.hpp"

namespace fedfa {

std::vector<std::size_t> depths_of(const ArchSpec& arch) {
    std::vector<std::size_t> d;
    for (const auto& s : arch.sections) d.push_back(s.depth);
    return d;
}

std::vector<std::size_t> widths_of(const ArchSpec& arch) {
    std::vector<std::size_t> w;
    for (const auto& s : arch.sections) w.push_back(s.width);
    return w;
}

Model layer_graft(const Model& m, const std::vector<std::size_t>& max_depths) {
    const auto& secs = m.arch.sections;
    if (max_depths.size() != secs.size()) throw Error("shape-error", "one max depth per section required");
    for (std::size_t s = 0; s < secs.size(); ++s)
        if (max_depths[s] < secs[s].depth) throw Error("cannot-shrink", "use extract_submodel to reduce depth");

    Model out{m.arch, {}};
    for (std::size_t s = 0; s < secs.size(); ++s) out.arch.sections[s].depth = max_depths[s];
    out.layers.reserve(layer_shapes(out.arch).size());

    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        const Layer& l = m.layers[li];
        out.layers.push_back(l);
        const bool last_in_section =
            l.kind == LayerKind::block && static_cast<std::size_t>(l.block_index) + 1 == secs[l.section].depth;
        if (!last_in_section) continue;
        for (std::size_t b = secs[l.section].depth; b < max_depths[l.section]; ++b) {
            Layer copy = l;
            copy.block_index = static_cast<int>(b);
            out.layers.push_back(std::move(copy));
        }
    }
    return out;
}

std::vector<std::size_t> top_rows_by_norm(const Tensor& w, std::size_t count) {
    const std::size_t rows = w.rows();
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) norms[r] = l2_norm(w.data().subspan(r * w.cols(), w.cols()));
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
    std::vector<std::size_t> picked(count);
    for (std::size_t i = 0; i < count; ++i) picked[i] = order[i % rows];
    return picked;
}

namespace {

// Rows 0..n-1 then copies of rows `dup`.
Tensor grow_rows(const Tensor& w, const std::vector<std::size_t>& dup) {
    const std::size_t cols = w.rank() == 2 ? w.cols() : 1;
    const std::size_t rows = w.rank() == 2 ? w.rows() : w.size();
    std::vector<double> data(w.storage());
    for (auto r : dup)
        data.insert(data.end(), w.storage().begin() + static_cast<std::ptrdiff_t>(r * cols),
                    w.storage().begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    if (w.rank() == 1) return Tensor::vector(std::move(data));
    return Tensor({rows + dup.size(), cols}, std::move(data));
}

// Columns 0..n-1 then copies of columns `dup`, each divided by `divisor[c]`.
Tensor grow_cols(const Tensor& w, const std::vector<std::size_t>& dup, const std::vector<double>& divisor) {
    const std::size_t rows = w.rows();
    const std::size_t cols = w.cols();
    const std::size_t new_cols = cols + dup.size();
    Tensor out({rows, new_cols});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = w.at(r, c) / divisor[c];
        for (std::size_t j = 0; j < dup.size(); ++j) out.at(r, cols + j) = w.at(r, dup[j]) / divisor[dup[j]];
    }
    return out;
}

}  // namespace

Model filter_graft(const Model& m, const std::vector<std::size_t>& max_widths, FilterGraftMode mode) {
    const std::size_t n_sec = m.arch.sections.size();
    if (max_widths.size() != n_sec) throw Error("shape-error", "one max width per section required");
    for (std::size_t s = 0; s < n_sec; ++s)
        if (max_widths[s] < m.arch.sections[s].width)
            throw Error("cannot-shrink", "use extract_submodel to reduce width");

    Model out = m;
    for (std::size_t s = 0; s < n_sec; ++s) {
        const std::size_t width = out.arch.sections[s].width;
        const std::size_t delta = max_widths[s] - width;
        if (delta == 0) continue;
        const auto sec = static_cast<int>(s);

        Layer* entry = out.find({LayerKind::entry, sec, -1});
        const auto dup = top_rows_by_norm(entry->weight, delta);
        std::vector<double> divisor(width, 1.0);
        if (mode == FilterGraftMode::function_preserving)
            for (auto k : dup) divisor[k] += 1.0;

        entry->weight = grow_rows(entry->weight, dup);
        entry->bias = grow_rows(entry->bias, dup);
        Layer* norm = out.find({LayerKind::static_norm, sec, -1});
        norm->norm_mean = grow_rows(*norm->norm_mean, dup);
        norm->norm_std = grow_rows(*norm->norm_std, dup);
        for (std::size_t b = 0; b < out.arch.sections[s].depth; ++b) {
            Layer* blk = out.find({LayerKind::block, sec, static_cast<int>(b)});
            blk->weight = grow_rows(grow_cols(blk->weight, dup, divisor), dup);
            blk->bias = grow_rows(blk->bias, dup);
        }
        Layer* next = s + 1 < n_sec ? out.find({LayerKind::entry, sec + 1, -1})
                                    : out.find({LayerKind::output, sec, -1});
        next->weight = grow_cols(next->weight, dup, divisor);
        out.arch.sections[s].width = max_widths[s];
    }
    check_consistent(out);
    return out;
}

}  // namespace fedfa
