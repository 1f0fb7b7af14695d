#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ovid::nn {

/// Dense row-major matrix of doubles. Vectors are 1 x n rows.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor row(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const double> row_span(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    bool same_shape(const Tensor& other) const noexcept { return rows_ == other.rows_ && cols_ == other.cols_; }
    std::string shape_string() const;
    void fill(double v);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// Learnable tensor with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    /// Weight matrices carry the L2 penalty; biases and norm parameters do not.
    bool regularized = false;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool reg = false)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), regularized(reg) {}

    void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

} // namespace ovid::nn
