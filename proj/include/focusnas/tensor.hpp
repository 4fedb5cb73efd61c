#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace focusnas {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Arithmetic is always carried out in
/// 64-bit; storage precision for weights is handled by `Parameter`.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    /// Rows/cols of a rank-2 tensor; a rank-1 tensor reads as a single row.
    [[nodiscard]] std::size_t rows() const;
    [[nodiscard]] std::size_t cols() const;

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] double* ptr() noexcept { return data_.data(); }
    [[nodiscard]] const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    /// Same data, new shape of equal element count.
    [[nodiscard]] Tensor reshaped(Shape shape) const&;
    [[nodiscard]] Tensor reshaped(Shape shape) &&;

    void fill(double value) noexcept;
    [[nodiscard]] bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace focusnas
