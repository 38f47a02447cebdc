#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedfa {

// Dense row-major array of doubles. A default-constructed Tensor is the
// "absent" tensor (rank 0, no data); every other tensor has a non-empty
// shape of positive extents and data().size() == product(shape).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    // Rank-2 accessors.
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool all_finite() const noexcept;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

std::size_t shape_product(const std::vector<std::size_t>& shape);

double l2_norm(const Tensor& t);
double l2_norm(std::span<const double> values);

// Keeps elements whose |value| is strictly below the nearest-rank
// p-quantile of |values| (threshold = ceil(p*n)-th smallest). Tensors with
// fewer than kPercentileMinElements elements, and thresholds that would
// leave nothing, return every element. Result preserves storage order.
inline constexpr std::size_t kPercentileMinElements = 20;
Tensor percentile_filter(const Tensor& t, double p);
std::vector<double> percentile_filter(std::span<const double> values, double p);

// Leading [c_out, c_in] block of a rank-2 tensor.
Tensor slice2d(const Tensor& t, std::size_t c_out, std::size_t c_in);
// Leading c elements of a rank-1 tensor.
Tensor slice1d(const Tensor& t, std::size_t c);

}  // namespace fedfa
