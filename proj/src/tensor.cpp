#include "focusnas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "focusnas/error.hpp"

namespace focusnas {

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_) require(d > 0, Errc::shape_mismatch, "tensor dims must be positive: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) require(d > 0, Errc::shape_mismatch, "tensor dims must be positive: " + shape_string(shape_));
    require(shape_size(shape_) == data_.size(), Errc::shape_mismatch,
            "data length " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 1) return 1;
    require(shape_.size() == 2, Errc::shape_mismatch, "expected rank-2 tensor, got " + shape_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    require(shape_.size() == 1 || shape_.size() == 2, Errc::shape_mismatch,
            "expected rank-1 or rank-2 tensor, got " + shape_string(shape_));
    return shape_.back();
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    require(shape_size(shape) == data_.size(), Errc::shape_mismatch,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), std::move(data_));
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace focusnas
