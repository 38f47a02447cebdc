#include "fedfa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "fedfa/error.hpp"
#include "fedfa/training.hpp"

namespace fedfa {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// NaN when either side has zero variance.
double pcc_or_nan(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return kNaN;
    return std::clamp(cov / (std::sqrt(va) * std::sqrt(vb)), -1.0, 1.0);
}

}  // namespace

double pcc(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw Error("shape-error", "pcc needs equal lengths >= 2");
    const double r = pcc_or_nan(a, b);
    if (std::isnan(r)) throw Error("degenerate-vector", "pcc of a zero-variance vector");
    return r;
}

FilterBank FilterBank::from_linear(const Tensor& w) {
    if (w.rank() != 2) throw Error("shape-error", "FilterBank::from_linear needs a matrix");
    return {w.rows(), 1, w.cols(), w.storage()};
}

Matching greedy_match(const std::vector<double>& scores, std::size_t rows, std::size_t cols) {
    Matching m;
    m.column_of_row.assign(rows, -1);
    std::vector<bool> used(cols, false);
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        long best = -1;
        for (std::size_t c = 0; c < cols; ++c) {
            const double s = scores[r * cols + c];
            if (used[c] || std::isnan(s)) continue;
            if (best < 0 || s > scores[r * cols + static_cast<std::size_t>(best)]) best = static_cast<long>(c);
        }
        if (best < 0) continue;
        used[static_cast<std::size_t>(best)] = true;
        m.column_of_row[r] = best;
        sum += scores[r * cols + static_cast<std::size_t>(best)];
        ++m.matched;
    }
    m.mean = m.matched > 0 ? sum / static_cast<double>(m.matched) : kNaN;
    return m;
}

LayerSimilarity layer_similarity(const FilterBank& a, const FilterBank& b) {
    if (a.map_len != b.map_len) throw Error("shape-error", "weight maps differ in length");
    if (a.map_len < 2) throw Error("degenerate-layer", "weight maps need at least two entries");
    const std::size_t nf = std::min(a.filters, b.filters);
    const std::size_t nk = std::min(a.maps, b.maps);

    std::vector<double> filter_scores(nf * nf, kNaN);
    std::vector<double> map_scores(nk * nk);
    for (std::size_t i = 0; i < nf; ++i) {
        for (std::size_t j = 0; j < nf; ++j) {
            for (std::size_t k = 0; k < nk; ++k)
                for (std::size_t l = 0; l < nk; ++l) map_scores[k * nk + l] = pcc_or_nan(a.map(i, k), b.map(j, l));
            filter_scores[i * nf + j] = greedy_match(map_scores, nk, nk).mean;
        }
    }
    LayerSimilarity out;
    out.filters = greedy_match(filter_scores, nf, nf);
    if (out.filters.matched == 0) throw Error("degenerate-layer", "no filter pair has a defined correlation");
    out.similarity = out.filters.mean;
    return out;
}

double layer_similarity(const Tensor& a, const Tensor& b) {
    const std::size_t rows = std::min(a.rows(), b.rows());
    const std::size_t cols = std::min(a.cols(), b.cols());
    return layer_similarity(FilterBank::from_linear(slice2d(a, rows, cols)),
                            FilterBank::from_linear(slice2d(b, rows, cols)))
        .similarity;
}

double symmetric_layer_similarity(const Tensor& a, const Tensor& b) {
    return 0.5 * (layer_similarity(a, b) + layer_similarity(b, a));
}

std::vector<SimilarityRow> section_similarity_table(const Model& m, const std::string& epoch_tag) {
    std::vector<SimilarityRow> rows;
    for (std::size_t s = 0; s < m.arch.sections.size(); ++s) {
        const auto sec = static_cast<int>(s);
        const auto depth = static_cast<int>(m.arch.sections[s].depth);
        for (int i = 1; i < depth; ++i) {
            for (int j = i + 1; j < depth; ++j) {
                const Layer* a = m.find({LayerKind::block, sec, i});
                const Layer* b = m.find({LayerKind::block, sec, j});
                rows.push_back({sec, i, j, epoch_tag, symmetric_layer_similarity(a->weight, b->weight)});
            }
        }
    }
    return rows;
}

std::vector<ScaleRow> scale_metrics(const Model& baseline, const Model& other) {
    if (!is_subarch(baseline.arch, other.arch))
        throw Error("not-a-submodel", "baseline arch must fit inside the other model");
    std::vector<ScaleRow> rows;
    for (const auto& bl : baseline.layers) {
        if (!bl.is_linear()) continue;
        const Layer* ol = other.find(bl.key());
        const Tensor cut = slice2d(ol->weight, bl.weight.rows(), bl.weight.cols());
        double mag = 0.0, dist = 0.0;
        for (std::size_t i = 0; i < bl.weight.size(); ++i) {
            mag += std::abs(bl.weight[i]);
            dist += std::abs(bl.weight[i] - cut[i]);
        }
        const auto n = static_cast<double>(bl.weight.size());
        rows.push_back({bl.key(), mag / n, dist / n});
    }
    return rows;
}

double logit_variance(const Model& m, const Tensor& inputs) {
    const Tensor y = forward(m, inputs);
    const auto n = static_cast<double>(y.size());
    double mean = 0.0;
    for (double v : y.data()) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : y.data()) var += (v - mean) * (v - mean);
    return var / n;
}

VarianceSeries variance_rate_from_series(std::vector<double> series, std::size_t k) {
    VarianceSeries out;
    out.variance = std::move(series);
    const std::size_t steps = out.variance.size() > 1 ? std::min(k, out.variance.size() - 1) : 0;
    if (steps == 0) return out;
    double sum = 0.0;
    for (std::size_t t = 0; t < steps; ++t) sum += out.variance[t + 1] - out.variance[t];
    out.rate = sum / static_cast<double>(steps);
    return out;
}

VarianceSeries logit_variance_rate(const std::vector<Model>& snapshots, const Tensor& inputs, std::size_t k) {
    std::vector<double> series;
    for (const auto& m : snapshots) series.push_back(logit_variance(m, inputs));
    return variance_rate_from_series(std::move(series), k);
}

double macs_per_epoch(const std::vector<LayerShape>& layers, std::size_t shard_size) {
    double total = 0.0;
    for (const auto& l : layers)
        if (l.key.kind != LayerKind::static_norm)
            total += static_cast<double>(l.out) * static_cast<double>(l.in) * static_cast<double>(shard_size) *
                     static_cast<double>(kMacPassFactor);
    return total;
}

double macs_per_epoch(const ArchSpec& arch, std::size_t shard_size) {
    return macs_per_epoch(layer_shapes(arch), shard_size);
}

MacEstimate mac_estimate(const ArchSpec& arch, std::size_t shard_size, std::size_t epochs, std::size_t rounds,
                         std::size_t clients_per_round) {
    MacEstimate e;
    e.macs = macs_per_epoch(arch, shard_size);
    e.mace = static_cast<double>(clients_per_round) * e.macs;
    e.tmac = static_cast<double>(rounds) * static_cast<double>(epochs) * e.mace;
    return e;
}

MacEstimate mac_estimate(const std::vector<ArchSpec>& archs, const std::vector<std::size_t>& shard_sizes,
                         std::size_t epochs, std::size_t rounds) {
    if (archs.size() != shard_sizes.size() || archs.empty())
        throw Error("shape-error", "one shard size per participant required");
    MacEstimate e;
    for (std::size_t i = 0; i < archs.size(); ++i) e.macs += macs_per_epoch(archs[i], shard_sizes[i]);
    e.macs /= static_cast<double>(archs.size());
    e.mace = static_cast<double>(archs.size()) * e.macs;
    e.tmac = static_cast<double>(rounds) * static_cast<double>(epochs) * e.mace;
    return e;
}

namespace {

std::pair<double, double> moments(std::span<const double> v) {
    if (v.empty()) throw Error("empty-tensor", "batch norm of empty input");
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, var / n};
}

}  // namespace

std::vector<double> batch_norm(std::span<const double> v, double eps) {
    const auto [mean, var] = moments(v);
    if (var + eps <= 0.0) throw Error("degenerate-vector", "batch norm of constant input with eps = 0");
    const double denom = std::sqrt(var + eps);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / denom;
    return out;
}

double bn_scale_check(std::span<const double> y, double alpha, double eps) {
    if (!(alpha > 0.0)) throw Error("bad-alpha", "alpha must be positive");
    if (eps < 0.0) throw Error("bad-eps", "eps must be non-negative");
    const auto [mean, var] = moments(y);
    if (var + eps <= 0.0) throw Error("degenerate-vector", "batch norm of constant input with eps = 0");
    // BN(alpha*y)_i = alpha*(y_i - mean) / sqrt(alpha^2*var + eps)
    //              = (y_i - mean) / sqrt(var + eps / alpha^2)
    const double plain = std::sqrt(var + eps);
    const double scaled = std::sqrt(var + eps / (alpha * alpha));
    double worst = 0.0;
    for (double v : y) worst = std::max(worst, std::abs((v - mean) / scaled - (v - mean) / plain));
    return worst;
}

ConvergenceDiagnostic convergence_diagnostic(const std::vector<ScalingReport>& rounds) {
    ConvergenceDiagnostic d;
    for (const auto& r : rounds) {
        const double mx = r.layers.empty() ? 1.0 : r.max_alpha();
        d.max_alpha.push_back(mx);
        if (mx < kAlphaBandLow || mx > kAlphaBandHigh) d.in_band = false;
    }
    return d;
}

void write_similarity_csv(const std::vector<SimilarityRow>& rows, std::ostream& out) {
    out << "section,block_i,block_j,epoch_tag,similarity\n" << std::setprecision(17);
    for (const auto& r : rows)
        out << r.section << ',' << r.block_i << ',' << r.block_j << ',' << r.epoch_tag << ',' << r.similarity << '\n';
}

void write_scale_csv(const std::vector<ScaleRow>& rows, std::ostream& out) {
    out << "layer_kind,section,block,avg_magnitude,avg_distance,distance_over_magnitude\n" << std::setprecision(17);
    for (const auto& r : rows)
        out << to_string(r.key.kind) << ',' << r.key.section << ',' << r.key.block_index << ',' << r.avg_magnitude
            << ',' << r.avg_distance << ',' << (r.avg_magnitude > 0 ? r.avg_distance / r.avg_magnitude : 0.0)
            << '\n';
}

void write_variance_csv(const VarianceSeries& s, std::ostream& out) {
    out << "epoch,variance\n" << std::setprecision(17);
    for (std::size_t i = 0; i < s.variance.size(); ++i) out << i << ',' << s.variance[i] << '\n';
    out << "# rate," << s.rate << '\n';
}

}  // namespace fedfa
