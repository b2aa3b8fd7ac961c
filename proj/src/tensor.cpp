#include "ganselect/tensor.hpp"

#include <cmath>
#include <numeric>

#include "ganselect/error.hpp"

namespace ganselect {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size())
        throw ConfigError("tensor: shape " + shape_str(shape_) + " does not hold " +
                          std::to_string(data_.size()) + " values");
}

Tensor Tensor::vector(std::initializer_list<double> v) { return Tensor(Shape{v.size()}, std::vector<double>(v)); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> v) {
    return Tensor(Shape{rows, cols}, std::vector<double>(v));
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
    if (shape_.empty()) return 1;
    return shape_.back();
}

double Tensor::item() const {
    if (data_.size() != 1) throw UsageError("tensor: item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (rank() != 2 || begin > end || end > shape_[0]) throw UsageError("tensor: bad row slice");
    const std::size_t c = shape_[1];
    return Tensor(Shape{end - begin, c},
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

}  // namespace ganselect
