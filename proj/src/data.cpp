#include "fedfa/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fedfa/error.hpp"
#include "fedfa/rng.hpp"

namespace fedfa {

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    const std::size_t d = dim();
    Dataset out;
    out.n_classes = n_classes;
    std::vector<double> data;
    data.reserve(indices.size() * d);
    for (auto i : indices) {
        const auto row = inputs.data().subspan(i * d, d);
        data.insert(data.end(), row.begin(), row.end());
        out.labels.push_back(labels.at(i));
    }
    if (!indices.empty()) out.inputs = Tensor({indices.size(), d}, std::move(data));
    return out;
}

void validate(const Dataset& ds) {
    if (ds.size() == 0) throw Error("empty-dataset", "dataset has no samples");
    if (ds.inputs.rank() != 2 || ds.inputs.rows() != ds.size())
        throw Error("shape-error", "inputs must be [n, dim] with one row per label");
    for (auto y : ds.labels)
        if (y >= ds.n_classes) throw Error("bad-label", "label out of range");
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    return by_class;
}

Shard make_shard(const Dataset& ds, int client, std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());
    Shard s;
    s.client_id = client;
    s.data = ds.subset(idx);
    std::vector<bool> seen(ds.n_classes, false);
    for (auto y : s.data.labels) seen[y] = true;
    for (std::size_t c = 0; c < ds.n_classes; ++c)
        if (seen[c]) s.active_classes.push_back(c);
    s.source_indices = std::move(idx);
    return s;
}

}  // namespace

Dataset gen_gaussian_blobs_split(std::size_t n_classes, std::size_t dim, std::size_t n_per_class,
                                 double spread, std::uint64_t seed, std::uint64_t split) {
    if (n_classes == 0 || dim == 0 || n_per_class == 0 || spread < 0.0)
        throw Error("bad-dataset", "blob parameters must be positive");
    constexpr double kCentreRadius = 3.0;
    std::vector<std::vector<double>> centres(n_classes, std::vector<double>(dim));
    for (std::size_t c = 0; c < n_classes; ++c) {
        Rng rng(derive_seed(seed, {0xC3A7E5ULL, c}));
        double norm = 0.0;
        do {
            for (auto& v : centres[c]) v = rng.normal();
            norm = 0.0;
            for (double v : centres[c]) norm += v * v;
            norm = std::sqrt(norm);
        } while (norm < 1e-12);
        for (auto& v : centres[c]) v *= kCentreRadius / norm;
    }
    Rng noise(derive_seed(seed, {0x0015EULL, split}));
    Dataset ds;
    ds.n_classes = n_classes;
    std::vector<double> data;
    data.reserve(n_classes * n_per_class * dim);
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            for (std::size_t k = 0; k < dim; ++k) data.push_back(centres[c][k] + spread * noise.normal());
            ds.labels.push_back(c);
        }
    }
    ds.inputs = Tensor({n_classes * n_per_class, dim}, std::move(data));
    return ds;
}

Dataset gen_gaussian_blobs(std::size_t n_classes, std::size_t dim, std::size_t n_per_class,
                           double spread, std::uint64_t seed) {
    return gen_gaussian_blobs_split(n_classes, dim, n_per_class, spread, seed, 0);
}

Partition partition_iid(const Dataset& ds, std::size_t n_clients, std::uint64_t seed) {
    validate(ds);
    if (n_clients == 0) throw Error("too-few-samples", "need at least one client");
    const std::size_t n = ds.size();
    if (n < n_clients) throw Error("too-few-samples", "fewer samples than clients");

    std::size_t present = 0;
    auto by_class = indices_by_class(ds);
    for (const auto& v : by_class) present += v.empty() ? 0 : 1;

    Rng rng(derive_seed(seed, {0x11DULL}));
    std::vector<double> u(n_clients);
    double usum = 0.0;
    for (auto& x : u) {
        x = 1.0 + rng.uniform();
        usum += x;
    }
    std::vector<std::size_t> sizes(n_clients);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
        sizes[c] = static_cast<std::size_t>(std::floor(u[c] * static_cast<double>(n) / usum));
        assigned += sizes[c];
    }
    if (assigned > n) throw Error("internal", "iid size rounding overshoot");
    // Spread the rounding leftover over the smallest clients, then restore
    // 2 * min >= max if rounding broke it.
    for (std::size_t left = n - assigned; left > 0; --left) {
        auto it = std::min_element(sizes.begin(), sizes.end());
        ++*it;
    }
    for (;;) {
        auto mn = std::min_element(sizes.begin(), sizes.end());
        auto mx = std::max_element(sizes.begin(), sizes.end());
        if (2 * *mn >= *mx) break;
        --*mx;
        ++*mn;
    }
    if (*std::min_element(sizes.begin(), sizes.end()) < present)
        throw Error("too-few-samples", "clients cannot each hold every class");

    // Class-interleaved order: any run of `present` consecutive entries holds
    // every class while all classes still have samples left.
    for (auto& v : by_class) rng.shuffle(v);
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t round = 0; order.size() < n; ++round)
        for (const auto& v : by_class)
            if (round < v.size()) order.push_back(v[round]);

    Partition p;
    std::size_t pos = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                     order.begin() + static_cast<std::ptrdiff_t>(pos + sizes[c]));
        pos += sizes[c];
        p.shards.push_back(make_shard(ds, static_cast<int>(c), std::move(idx)));
        if (p.shards.back().active_classes.size() != present)
            throw Error("too-few-samples", "class imbalance prevents an all-class iid shard");
    }
    p.unused.assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.end());
    std::sort(p.unused.begin(), p.unused.end());
    return p;
}

Partition partition_noniid(const Dataset& ds, std::size_t n_clients, double class_fraction,
                           std::uint64_t seed) {
    validate(ds);
    if (n_clients == 0) throw Error("too-few-samples", "need at least one client");
    if (!(class_fraction > 0.0 && class_fraction <= 1.0))
        throw Error("bad-fraction", "class_fraction must lie in (0, 1]");
    const std::size_t n_classes = ds.n_classes;
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(class_fraction * static_cast<double>(n_classes) - 1e-9)));

    Rng rng(derive_seed(seed, {0x201DULL}));
    std::vector<std::size_t> perm(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) perm[c] = c;
    rng.shuffle(perm);

    std::vector<std::vector<std::size_t>> held(n_clients);
    std::vector<std::size_t> holders(n_classes, 0);
    for (std::size_t c = 0; c < n_clients; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t cls = perm[(c * k + j) % n_classes];
            held[c].push_back(cls);
            ++holders[cls];
        }
    }

    auto by_class = indices_by_class(ds);
    std::size_t per_class = SIZE_MAX;
    for (std::size_t cls = 0; cls < n_classes; ++cls)
        if (holders[cls] > 0) per_class = std::min(per_class, by_class[cls].size() / holders[cls]);
    if (per_class == 0 || per_class == SIZE_MAX)
        throw Error("too-few-samples", "not enough samples per class for the non-iid split");

    for (auto& v : by_class) rng.shuffle(v);
    std::vector<std::size_t> cursor(n_classes, 0);
    Partition p;
    for (std::size_t c = 0; c < n_clients; ++c) {
        std::vector<std::size_t> idx;
        for (auto cls : held[c]) {
            for (std::size_t i = 0; i < per_class; ++i) idx.push_back(by_class[cls][cursor[cls] + i]);
            cursor[cls] += per_class;
        }
        p.shards.push_back(make_shard(ds, static_cast<int>(c), std::move(idx)));
    }
    for (std::size_t cls = 0; cls < n_classes; ++cls)
        for (std::size_t i = cursor[cls]; i < by_class[cls].size(); ++i) p.unused.push_back(by_class[cls][i]);
    std::sort(p.unused.begin(), p.unused.end());
    return p;
}

TestSets make_test_sets(const Dataset& test, const std::vector<Shard>& shards) {
    validate(test);
    TestSets out;
    out.global = test;
    for (const auto& s : shards) {
        std::vector<bool> keep(test.n_classes, false);
        for (auto c : s.active_classes) keep[c] = true;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < test.size(); ++i)
            if (keep[test.labels[i]]) idx.push_back(i);
        out.local.push_back(test.subset(idx));
    }
    return out;
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Error("io-error", "cannot open " + path);
    const std::size_t d = ds.dim();
    for (std::size_t k = 0; k < d; ++k) f << 'x' << k << ',';
    f << "label\n";
    f << std::setprecision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) f << ds.inputs.at(i, k) << ',';
        f << ds.labels[i] << '\n';
    }
}

Dataset read_dataset_csv(const std::string& path, std::size_t n_classes) {
    std::ifstream f(path);
    if (!f) throw Error("io-error", "cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw Error("bad-dataset", "empty csv");
    const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (cols < 2) throw Error("bad-dataset", "csv needs feature columns and a label");
    const std::size_t d = cols - 1;
    Dataset ds;
    std::vector<double> data;
    std::size_t max_label = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t k = 0;
        while (std::getline(ss, cell, ',')) {
            if (k < d) data.push_back(std::stod(cell));
            else {
                ds.labels.push_back(static_cast<std::size_t>(std::stoul(cell)));
                max_label = std::max(max_label, ds.labels.back());
            }
            ++k;
        }
        if (k != cols) throw Error("bad-dataset", "ragged csv row");
    }
    ds.n_classes = n_classes > 0 ? n_classes : max_label + 1;
    ds.inputs = Tensor({ds.labels.size(), d}, std::move(data));
    validate(ds);
    return ds;
}

}  // namespace fedfa
