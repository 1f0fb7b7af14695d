#include "ovid/nn/adam.hpp"

#include <cmath>

#include "ovid/error.hpp"

namespace ovid::nn {

void Adam::step(std::span<Parameter* const> params) {
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->value.rows(), p->value.cols());
            v_.emplace_back(p->value.rows(), p->value.cols());
        }
    }
    if (m_.size() != params.size()) {
        throw Error(ErrorCode::InvalidArgument, "Adam::step called with a different parameter list");
    }
    ++steps_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.grad.same_shape(p.value) || !m_[i].same_shape(p.value)) {
            throw Error(ErrorCode::ShapeMismatch, "Adam: gradient shape mismatch for " + p.name);
        }
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad[k];
            m_[i][k] = b1 * m_[i][k] + (1.0 - b1) * g;
            v_[i][k] = b2 * v_[i][k] + (1.0 - b2) * g * g;
            const double m_hat = m_[i][k] / c1;
            const double v_hat = v_[i][k] / c2;
            p.value[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
        }
    }
}

} // namespace ovid::nn
