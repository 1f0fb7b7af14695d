#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ovid/nn/tensor.hpp"

namespace ovid::nn {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected ADAM. Moments are bound positionally to the parameter list
/// passed to the first step(); later calls must pass the same list.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    void step(std::span<Parameter* const> params);

    std::size_t steps() const noexcept { return steps_; }
    const AdamOptions& options() const noexcept { return options_; }
    const std::vector<Tensor>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor>& second_moments() const noexcept { return v_; }

private:
    AdamOptions options_;
    std::size_t steps_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace ovid::nn
