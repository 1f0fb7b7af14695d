#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "ovid/nn/tensor.hpp"

namespace ovid::nn {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
};

/// Define-by-run operation tape. Operations compute their value eagerly and
/// register a closure that propagates the output gradient to their inputs.
/// Not thread-safe; one tape per thread.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Var constant(Tensor value);
    /// Leaf bound to a parameter; backward() accumulates into param.grad.
    /// Binding the same parameter again returns the existing leaf.
    Var param(Parameter& p);
    /// Records an op output. `inputs_need_grad` lets constant-only subgraphs skip backward.
    Var record(Tensor value, bool requires_grad, Backward backward);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Gradient slot of a node, allocated on first use.
    Tensor& grad(std::size_t id);
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

    /// Backpropagates from a 1x1 node; seeds its gradient with `seed`.
    void backward(Var loss, double seed = 1.0);

    std::size_t size() const noexcept { return nodes_.size(); }
    void clear() {
        nodes_.clear();
        bound_.clear();
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> bound_;
};

inline const Tensor& Var::value() const {
    return tape->value(*this);
}

} // namespace ovid::nn
