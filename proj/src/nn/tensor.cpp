#include "ovid/nn/tensor.hpp"

#include <algorithm>

#include "ovid/error.hpp"

namespace ovid::nn {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw Error(ErrorCode::ShapeMismatch, std::to_string(values_.size()) + " values for shape " + shape_string());
    }
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Tensor::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Tensor::fill(double v) {
    std::fill(values_.begin(), values_.end(), v);
}

} // namespace ovid::nn
