#pragma once

#include <vector>

#include "fedfa/model.hpp"

namespace fedfa {

// Appends copies of each section's last residual block until the section
// reaches max_depths[s]. Throws "cannot-shrink" if a section is already deeper.
Model layer_graft(const Model& m, const std::vector<std::size_t>& max_depths);

enum class FilterGraftMode {
    // Next-layer input columns of a duplicated unit are divided by the
    // unit's multiplicity, so the widened model computes the same function.
    function_preserving,
    // Columns are copied verbatim; duplicated units count twice downstream.
    raw_appendix,
};

// Widens every section to max_widths[s] by duplicating the highest-norm
// units of the section's entry layer. The same unit set is replicated through
// the section's static-norm and residual blocks (rows and columns, since the
// skip path carries the widened state) and into the next consumer's columns.
Model filter_graft(const Model& m, const std::vector<std::size_t>& max_widths,
                   FilterGraftMode mode = FilterGraftMode::function_preserving);

// Indices of the `count` most important rows of w by L2 norm, descending,
// ties to the lower index. count may exceed rows(), in which case the
// importance order repeats.
std::vector<std::size_t> top_rows_by_norm(const Tensor& w, std::size_t count);

std::vector<std::size_t> depths_of(const ArchSpec& arch);
std::vector<std::size_t> widths_of(const ArchSpec& arch);

}  // namespace fedfa
