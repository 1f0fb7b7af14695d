#pragma once

#include <span>
#include <string>
#include <vector>

#include "ovid/nn/ops.hpp"
#include "ovid/nn/tape.hpp"

namespace ovid::nn {

enum class Activation { None, ReLU };

/// y = act(x W + b). x: n x d_in, W: d_in x d_out, b: 1 x d_out.
Var fc_forward(Var x, Var weight, Var bias, Activation activation);

struct AttentionResult {
    Var output;
    /// 1 x n (or q x n) attention distribution.
    Var weights;
};

/// softmax(Q K^T / sqrt(d_k)) V. Raises Error{EmptyKeySet} when K has no rows.
AttentionResult attention(Var query, Var keys, Var values);

struct HeadVars {
    Var wq;
    Var wk;
    Var wv;
};

/// [head_1, ..., head_h] W_O with head_i = attention(Q Wq_i, K Wk_i, V Wv_i).
Var multi_head(Var query, Var keys, Var values, std::span<const HeadVars> heads, Var w_out);

// Parameter bundles with their initialisation schemes.

struct Linear {
    Parameter weight;
    Parameter bias;

    Linear() = default;
    /// Kaiming-uniform (ReLU layers) or Xavier-uniform weights, zero bias.
    Linear(const std::string& name, std::size_t in, std::size_t out, Activation activation, Rng& rng);

    Var forward(Tape& tape, Var x, Activation activation);
};

struct LayerNorm {
    Parameter gain;
    Parameter bias;

    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t dim);

    Var forward(Tape& tape, Var x);
};

struct AttentionHead {
    Parameter wq;
    Parameter wk;
    Parameter wv;
};

struct MultiHeadAttention {
    std::vector<AttentionHead> heads;
    Parameter w_out;

    MultiHeadAttention() = default;
    /// Projections d x d per head and W_O of (n_head * d) x d, Xavier-uniform.
    MultiHeadAttention(const std::string& name, std::size_t n_head, std::size_t dim, Rng& rng);

    Var forward(Tape& tape, Var query, Var keys, Var values);
};

void init_uniform(Tensor& t, double bound, Rng& rng);
double kaiming_bound(std::size_t fan_in);
double xavier_bound(std::size_t fan_in, std::size_t fan_out);

} // namespace ovid::nn
