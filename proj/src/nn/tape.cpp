#include "ovid/nn/tape.hpp"

#include "ovid/error.hpp"

namespace ovid::nn {

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, nullptr, false});
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) {
        return Var{this, it->second};
    }
    nodes_.push_back(Node{p.value, Tensor{}, nullptr, &p, true});
    bound_.emplace(&p, nodes_.size() - 1);
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad ? std::move(backward) : nullptr, nullptr,
                          requires_grad});
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
    auto& node = nodes_[id];
    if (!node.grad.same_shape(node.value) || (node.grad.empty() && !node.value.empty())) {
        node.grad = Tensor(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

void Tape::backward(Var loss, double seed) {
    if (loss.tape != this) {
        throw Error(ErrorCode::InvalidArgument, "variable belongs to another tape");
    }
    if (nodes_[loss.id].value.size() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "backward() needs a 1x1 loss, got " +
                                                  nodes_[loss.id].value.shape_string());
    }
    grad(loss.id)[0] += seed;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.requires_grad || node.grad.empty()) {
            continue;
        }
        if (node.backward) {
            node.backward(*this, i);
        }
        if (node.param != nullptr) {
            auto& target = node.param->grad;
            if (!target.same_shape(node.value)) {
                target = Tensor(node.value.rows(), node.value.cols());
            }
            const auto src = node.grad.values();
            auto dst = target.values();
            for (std::size_t k = 0; k < src.size(); ++k) {
                dst[k] += src[k];
            }
        }
    }
}

} // namespace ovid::nn
