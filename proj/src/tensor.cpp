#include "fedfa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedfa/error.hpp"

namespace fedfa {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

void check_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw Error("shape-error", "tensor shape must have rank >= 1");
    for (auto d : shape)
        if (d == 0) throw Error("shape-error", "tensor extents must be positive");
}

void check_same_shape(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error("shape-error", "elementwise op on mismatched shapes");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_product(shape_))
        throw Error("shape-error", "data length " + std::to_string(data_.size()) +
                                       " does not match shape product");
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    check_same_shape(*this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    check_same_shape(*this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double l2_norm(std::span<const double> values) {
    if (values.empty()) throw Error("empty-tensor", "l2_norm of empty tensor");
    double sum = 0.0;
    for (double v : values) sum += v * v;
    return std::sqrt(sum);
}

double l2_norm(const Tensor& t) { return l2_norm(t.data()); }

std::vector<double> percentile_filter(std::span<const double> values, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("bad-percentile", "p must lie in (0, 1]");
    if (values.empty()) throw Error("empty-tensor", "percentile_filter of empty tensor");
    const std::size_t n = values.size();
    if (n < kPercentileMinElements) return {values.begin(), values.end()};

    std::vector<double> mags(n);
    std::transform(values.begin(), values.end(), mags.begin(), [](double v) { return std::abs(v); });
    // Nearest rank: k = ceil(p*n), 1-based. The small epsilon guards against
    // p*n landing a hair above an integer through rounding (0.95*100).
    auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end());
    const double threshold = mags[k - 1];

    std::vector<double> kept;
    kept.reserve(k);
    for (double v : values)
        if (std::abs(v) < threshold) kept.push_back(v);
    if (kept.empty()) return {values.begin(), values.end()};
    return kept;
}

Tensor percentile_filter(const Tensor& t, double p) {
    return Tensor::vector(percentile_filter(t.data(), p));
}

Tensor slice2d(const Tensor& t, std::size_t c_out, std::size_t c_in) {
    if (t.rank() != 2) throw Error("slice-bounds", "slice2d needs a rank-2 tensor");
    if (c_out < 1 || c_out > t.rows() || c_in < 1 || c_in > t.cols())
        throw Error("slice-bounds", "requested [" + std::to_string(c_out) + "," +
                                        std::to_string(c_in) + "] of [" + std::to_string(t.rows()) +
                                        "," + std::to_string(t.cols()) + "]");
    if (c_out == t.rows() && c_in == t.cols()) return t;
    Tensor out({c_out, c_in});
    for (std::size_t r = 0; r < c_out; ++r)
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(r * t.cols()), c_in,
                    out.data().begin() + static_cast<std::ptrdiff_t>(r * c_in));
    return out;
}

Tensor slice1d(const Tensor& t, std::size_t c) {
    if (t.rank() != 1) throw Error("slice-bounds", "slice1d needs a rank-1 tensor");
    if (c < 1 || c > t.size()) throw Error("slice-bounds", "slice1d length out of range");
    if (c == t.size()) return t;
    return Tensor::vector(std::vector<double>(t.storage().begin(),
                                              t.storage().begin() + static_cast<std::ptrdiff_t>(c)));
}

}  // namespace fedfa
