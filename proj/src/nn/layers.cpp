#include "ovid/nn/layers.hpp"

#include <cmath>

#include "ovid/error.hpp"

namespace ovid::nn {

Var fc_forward(Var x, Var weight, Var bias, Activation activation) {
    Var y = add_row(matmul(x, weight), bias);
    return activation == Activation::ReLU ? relu(y) : y;
}

AttentionResult attention(Var query, Var keys, Var values) {
    const Tensor& k = keys.value();
    if (k.rows() == 0) {
        throw Error(ErrorCode::EmptyKeySet, "attention over an empty key set");
    }
    if (values.value().rows() != k.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "attention: keys " + k.shape_string() + " but values " +
                                                  values.value().shape_string());
    }
    const double d_k = static_cast<double>(k.cols());
    Var scores = scale(matmul(query, transpose(keys)), 1.0 / std::sqrt(d_k));
    Var weights = softmax_rows(scores);
    return {matmul(weights, values), weights};
}

Var multi_head(Var query, Var keys, Var values, std::span<const HeadVars> heads, Var w_out) {
    std::vector<Var> outputs;
    outputs.reserve(heads.size());
    for (const auto& h : heads) {
        outputs.push_back(attention(matmul(query, h.wq), matmul(keys, h.wk), matmul(values, h.wv)).output);
    }
    return matmul(concat_cols(outputs), w_out);
}

void init_uniform(Tensor& t, double bound, Rng& rng) {
    for (auto& x : t.values()) {
        x = (2.0 * uniform_unit(rng) - 1.0) * bound;
    }
}

double kaiming_bound(std::size_t fan_in) {
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Activation activation, Rng& rng)
    : weight(name + ".weight", Tensor(in, out), true), bias(name + ".bias", Tensor(1, out)) {
    init_uniform(weight.value, activation == Activation::ReLU ? kaiming_bound(in) : xavier_bound(in, out), rng);
}

Var Linear::forward(Tape& tape, Var x, Activation activation) {
    return fc_forward(x, tape.param(weight), tape.param(bias), activation);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gain(name + ".gain", Tensor(1, dim, 1.0)), bias(name + ".bias", Tensor(1, dim)) {}

Var LayerNorm::forward(Tape& tape, Var x) {
    return layer_norm(x, tape.param(gain), tape.param(bias));
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t n_head, std::size_t dim, Rng& rng)
    : w_out(name + ".w_out", Tensor(n_head * dim, dim), true) {
    const double bound = xavier_bound(dim, dim);
    for (std::size_t h = 0; h < n_head; ++h) {
        const std::string prefix = name + ".head" + std::to_string(h);
        AttentionHead head{Parameter(prefix + ".wq", Tensor(dim, dim), true),
                           Parameter(prefix + ".wk", Tensor(dim, dim), true),
                           Parameter(prefix + ".wv", Tensor(dim, dim), true)};
        init_uniform(head.wq.value, bound, rng);
        init_uniform(head.wk.value, bound, rng);
        init_uniform(head.wv.value, bound, rng);
        heads.push_back(std::move(head));
    }
    init_uniform(w_out.value, xavier_bound(n_head * dim, dim), rng);
}

Var MultiHeadAttention::forward(Tape& tape, Var query, Var keys, Var values) {
    std::vector<HeadVars> vars;
    vars.reserve(heads.size());
    for (auto& h : heads) {
        vars.push_back({tape.param(h.wq), tape.param(h.wk), tape.param(h.wv)});
    }
    return multi_head(query, keys, values, vars, tape.param(w_out));
}

} // namespace ovid::nn
