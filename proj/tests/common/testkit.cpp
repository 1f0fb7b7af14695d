#include "testkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <zlib.h>

#include "ovid/error.hpp"
#include "ovid/miner.hpp"
#include "ovid/nn/ops.hpp"

#ifndef OVID_TEST_DATA_DIR
#error "OVID_TEST_DATA_DIR must be defined"
#endif

namespace ovid::testkit {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

std::filesystem::path data_dir() {
    return OVID_TEST_DATA_DIR;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
    return nlohmann::json::parse(read_file(path));
}

std::vector<std::filesystem::path> fixture_osc() {
    return {data_dir() / "fixture" / "history-1.osc", data_dir() / "fixture" / "history-2.osc"};
}

ChangesetStore fixture_store() {
    ChangesetStore store;
    ingest_files(data_dir() / "fixture" / "changesets.osm", fixture_osc(), store);
    return store;
}

nlohmann::json fixture_expected() {
    return read_json(data_dir() / "fixture" / "expected.json");
}

// ---------------------------------------------------------------------------

void GradReport::merge(const GradReport& other) {
    if (other.max_rel_err > max_rel_err || worst.empty()) {
        if (other.max_rel_err >= max_rel_err) {
            worst = other.worst;
        }
    }
    max_rel_err = std::max(max_rel_err, other.max_rel_err);
    checked += other.checked;
    skipped += other.skipped;
}

double rel_err(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradReport check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& loss, double h) {
    for (auto* p : params) {
        p->zero_grad();
    }
    {
        Tape tape;
        tape.backward(loss(tape));
    }
    std::vector<Tensor> analytic;
    for (auto* p : params) {
        analytic.push_back(p->grad);
    }

    const auto eval = [&](std::vector<double>& relu_inputs) {
        relu_inputs.clear();
        nn::set_relu_probe(&relu_inputs);
        Tape tape;
        const double v = loss(tape).value()[0];
        nn::set_relu_probe(nullptr);
        return v;
    };

    GradReport report;
    std::vector<double> plus_inputs, minus_inputs;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi]->value;
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double original = value[k];
            value[k] = original + h;
            const double f_plus = eval(plus_inputs);
            value[k] = original - h;
            const double f_minus = eval(minus_inputs);
            value[k] = original;

            bool kink = plus_inputs.size() != minus_inputs.size();
            for (std::size_t i = 0; !kink && i < plus_inputs.size(); ++i) {
                kink = (plus_inputs[i] > 0.0) != (minus_inputs[i] > 0.0);
            }
            if (kink) {
                ++report.skipped;
                continue;
            }
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double err = rel_err(analytic[pi][k], numeric);
            ++report.checked;
            if (err > report.max_rel_err || report.worst.empty()) {
                report.max_rel_err = std::max(report.max_rel_err, err);
                if (err >= report.max_rel_err) {
                    std::ostringstream ss;
                    ss << params[pi]->name << "[" << k << "] analytic " << analytic[pi][k] << " numeric " << numeric;
                    report.worst = ss.str();
                }
            }
        }
    }
    return report;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale, double min_abs) {
    Tensor t(rows, cols);
    for (auto& x : t.values()) {
        do {
            x = (2.0 * uniform_unit(rng) - 1.0) * scale;
        } while (std::abs(x) < min_abs);
    }
    return t;
}

Var readout(Tape& tape, Var x, const Tensor& u, const Tensor& v) {
    return nn::matmul(nn::matmul(tape.constant(u), x), tape.constant(v));
}

namespace {

struct Probe {
    std::vector<std::unique_ptr<Parameter>> owned;
    Rng& rng;

    Parameter* make(const std::string& name, std::size_t r, std::size_t c, double scale = 1.0, double min_abs = 0.0) {
        owned.push_back(std::make_unique<Parameter>(name, random_tensor(r, c, rng, scale, min_abs)));
        return owned.back().get();
    }
};

GradReport named(GradReport r, const std::string& op) {
    r.worst = op + ": " + r.worst;
    return r;
}

} // namespace

GradReport primitive_gradients(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 11));
    GradReport total;
    Probe probe{{}, rng};
    const auto check = [&](const std::string& op, std::vector<Parameter*> params, std::size_t out_rows,
                           std::size_t out_cols, const std::function<Var(Tape&, std::vector<Var>&)>& f) {
        const Tensor u = random_tensor(1, out_rows, rng);
        const Tensor v = random_tensor(out_cols, 1, rng);
        auto report = check_gradients(params, [&](Tape& tape) {
            std::vector<Var> vars;
            for (auto* p : params) {
                vars.push_back(tape.param(*p));
            }
            return readout(tape, f(tape, vars), u, v);
        });
        total.merge(named(report, op));
    };

    check("matmul", {probe.make("a", 3, 4), probe.make("b", 4, 2)}, 3, 2,
          [](Tape&, std::vector<Var>& x) { return nn::matmul(x[0], x[1]); });
    check("transpose", {probe.make("a", 3, 4)}, 4, 3, [](Tape&, std::vector<Var>& x) { return nn::transpose(x[0]); });
    check("add", {probe.make("a", 2, 3), probe.make("b", 2, 3)}, 2, 3,
          [](Tape&, std::vector<Var>& x) { return nn::add(x[0], x[1]); });
    check("add_row", {probe.make("a", 3, 4), probe.make("row", 1, 4)}, 3, 4,
          [](Tape&, std::vector<Var>& x) { return nn::add_row(x[0], x[1]); });
    check("scale", {probe.make("a", 2, 2)}, 2, 2, [](Tape&, std::vector<Var>& x) { return nn::scale(x[0], -1.7); });
    check("relu", {probe.make("a", 3, 5, 1.0, 1e-2)}, 3, 5, [](Tape&, std::vector<Var>& x) { return nn::relu(x[0]); });
    check("sigmoid", {probe.make("a", 2, 5, 4.0)}, 2, 5, [](Tape&, std::vector<Var>& x) { return nn::sigmoid(x[0]); });
    check("softmax_rows", {probe.make("a", 3, 5, 3.0)}, 3, 5,
          [](Tape&, std::vector<Var>& x) { return nn::softmax_rows(x[0]); });
    check("layer_norm", {probe.make("x", 3, 6, 2.0), probe.make("gain", 1, 6), probe.make("bias", 1, 6)}, 3, 6,
          [](Tape&, std::vector<Var>& x) { return nn::layer_norm(x[0], x[1], x[2]); });
    check("concat_cols", {probe.make("a", 2, 3), probe.make("b", 2, 1), probe.make("c", 2, 2)}, 2, 6,
          [](Tape&, std::vector<Var>& x) { return nn::concat_cols(x); });
    const std::uint64_t mask_seed = rng();
    check("dropout", {probe.make("a", 4, 6)}, 4, 6, [mask_seed](Tape&, std::vector<Var>& x) {
        Rng masks(mask_seed);
        return nn::dropout(x[0], 0.4, nn::Mode::Train, masks);
    });
    check("sum_squares", {probe.make("a", 3, 3)}, 1, 1,
          [](Tape&, std::vector<Var>& x) { return nn::sum_squares(x[0]); });
    check("mean", {probe.make("a", 1, 1), probe.make("b", 1, 1), probe.make("c", 1, 1)}, 1, 1,
          [](Tape&, std::vector<Var>& x) { return nn::mean(x); });
    check("stack_rows", {probe.make("a", 1, 3), probe.make("b", 1, 3)}, 2, 3,
          [](Tape&, std::vector<Var>& x) { return nn::stack_rows(x); });
    check("fc_forward", {probe.make("x", 2, 4), probe.make("w", 4, 3), probe.make("b", 1, 3)}, 2, 3,
          [](Tape&, std::vector<Var>& x) { return nn::fc_forward(x[0], x[1], x[2], nn::Activation::ReLU); });
    check("attention", {probe.make("q", 1, 4), probe.make("k", 5, 4), probe.make("v", 5, 3)}, 1, 3,
          [](Tape&, std::vector<Var>& x) { return nn::attention(x[0], x[1], x[2]).output; });
    check("multi_head",
          {probe.make("q", 1, 3), probe.make("k", 4, 3), probe.make("v", 4, 3), probe.make("wq0", 3, 3),
           probe.make("wk0", 3, 3), probe.make("wv0", 3, 3), probe.make("wq1", 3, 3), probe.make("wk1", 3, 3),
           probe.make("wv1", 3, 3), probe.make("wo", 6, 3)},
          1, 3, [](Tape&, std::vector<Var>& x) {
              const nn::HeadVars heads[] = {{x[3], x[4], x[5]}, {x[6], x[7], x[8]}};
              return nn::multi_head(x[0], x[1], x[2], heads, x[9]);
          });

    // BCE takes probabilities directly; keep them clear of the clamp.
    {
        auto* p = probe.make("p", 6, 1);
        for (auto& x : p->value.values()) {
            x = 0.05 + 0.9 * uniform_unit(rng);
        }
        std::vector<double> y;
        for (std::size_t i = 0; i < 6; ++i) {
            y.push_back(static_cast<double>(uniform_index(rng, 2)));
        }
        auto report = check_gradients({p}, [&](Tape& tape) { return nn::bce_loss(tape.param(*p), y); });
        total.merge(named(report, "bce_loss"));
    }
    return total;
}

FeatureBundle random_bundle(const ModelDims& dims, std::size_t n_edits, Rng& rng, Label label) {
    FeatureBundle b;
    b.changeset = rng() % 1000000;
    b.label = label;
    b.user = rng() % 1000;
    const auto fill = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) {
            x = 2.0 * uniform_unit(rng) - 1.0;
        }
        return v;
    };
    b.x_c = fill(dims.d_c);
    b.x_u = fill(dims.d_u);
    for (std::size_t i = 0; i < n_edits; ++i) {
        b.m_e.push_back(fill(dims.d_e));
    }
    return b;
}

GradReport model_gradients(std::uint64_t seed) {
    const ModelDims dims{6, 4, 5};
    OvidConfig cfg;
    cfg.d_h = 6;
    cfg.n_head = 2;
    cfg.n_pred = 2;
    cfg.th_e_max = 10;
    cfg.dropout = 0.3;
    cfg.lambda = 0.01;
    cfg.seed = seed;
    OvidModel model(dims, cfg);
    Rng rng(derive_seed(seed, 12));
    std::vector<FeatureBundle> batch;
    const std::size_t edits[] = {3, 1, 2, 0};
    for (std::size_t i = 0; i < 4; ++i) {
        batch.push_back(random_bundle(dims, edits[i], rng, i % 2 == 0 ? Label::Vandalism : Label::Regular));
    }
    std::vector<double> targets;
    for (const auto& b : batch) {
        targets.push_back(b.label == Label::Vandalism ? 1.0 : 0.0);
    }
    const std::uint64_t mask_seed = rng();
    auto params = model.parameters();
    auto report = check_gradients(params, [&](Tape& tape) {
        Rng masks(mask_seed);
        std::vector<Var> preds;
        for (const auto& b : batch) {
            preds.push_back(model.forward(tape, b, nn::Mode::Train, masks));
        }
        Var loss = nn::bce_loss(nn::stack_rows(preds), targets);
        for (auto* p : params) {
            if (p->regularized) {
                loss = nn::add(loss, nn::scale(nn::sum_squares(tape.param(*p)), cfg.lambda));
            }
        }
        return loss;
    });
    return report;
}

std::vector<FeatureBundle> separable_set(const ModelDims& dims, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> direction(dims.d_c);
    for (auto& x : direction) {
        x = 2.0 * uniform_unit(rng) - 1.0;
    }
    std::vector<FeatureBundle> out;
    while (out.size() < n) {
        auto b = random_bundle(dims, uniform_index(rng, 4), rng);
        double s = 0.0;
        for (std::size_t i = 0; i < dims.d_c; ++i) {
            s += direction[i] * b.x_c[i];
        }
        if (std::abs(s) < 0.1) {
            continue;
        }
        // Alternate classes so the set stays balanced.
        const Label want = out.size() % 2 == 0 ? Label::Vandalism : Label::Regular;
        if ((s > 0.0) != (want == Label::Vandalism)) {
            for (auto& x : b.x_c) {
                x = -x;
            }
        }
        b.label = want;
        b.changeset = out.size() + 1;
        out.push_back(std::move(b));
    }
    return out;
}

OvidConfig small_config(std::uint64_t seed) {
    OvidConfig c;
    c.th_e_max = 10;
    c.n_pred = 2;
    c.n_head = 5;
    c.d_h = 12;
    c.dropout = 0.4;
    c.lambda = 0.005;
    c.seed = seed;
    return c;
}

// ---------------------------------------------------------------------------

namespace {

std::string describe(const char* what, double got, double want) {
    std::ostringstream ss;
    ss.precision(17);
    ss << what << ": got " << got << ", expected " << want;
    return ss.str();
}

} // namespace

std::string check_attention_invariants(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 21));
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 8);
        const std::size_t d = 1 + uniform_index(rng, 6);
        Tape tape;
        const Var q = tape.constant(random_tensor(1, d, rng, 3.0));
        const Tensor k_t = random_tensor(n, d, rng, 3.0);
        const Tensor v_t = random_tensor(n, d, rng, 3.0);
        const auto res = nn::attention(q, tape.constant(k_t), tape.constant(v_t));
        double sum = 0.0;
        for (double w : res.weights.value().values()) {
            if (!(w >= 0.0)) {
                return "negative attention weight";
            }
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            return describe("attention weight sum", sum, 1.0);
        }

        // Identical permutation of key and value rows.
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(perm), rng);
        Tensor k_p(n, d), v_p(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                k_p(i, j) = k_t(perm[i], j);
                v_p(i, j) = v_t(perm[i], j);
            }
        }
        nn::MultiHeadAttention mha("mha", 1 + uniform_index(rng, 3), d, rng);
        Tape t1, t2;
        const Tensor q_t = random_tensor(1, d, rng);
        const auto a = mha.forward(t1, t1.constant(q_t), t1.constant(k_t), t1.constant(v_t)).value();
        const auto b = mha.forward(t2, t2.constant(q_t), t2.constant(k_p), t2.constant(v_p)).value();
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (std::abs(a[j] - b[j]) > 1e-12) {
                return describe("multi_head under key/value permutation", b[j], a[j]);
            }
        }
    }

    // One key: the value row comes back unchanged.
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        const std::size_t d = 1 + uniform_index(rng, 6);
        const Tensor v = random_tensor(1, d, rng, 10.0);
        const auto res = nn::attention(tape.constant(random_tensor(1, d, rng, 10.0)),
                                       tape.constant(random_tensor(1, d, rng, 10.0)), tape.constant(v));
        if (!(res.output.value() == v)) {
            return "single-key attention did not return the value row exactly";
        }
    }

    // Identical keys: uniform weights.
    {
        Tape tape;
        const Tensor row = random_tensor(1, 4, rng);
        Tensor keys(5, 4);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                keys(i, j) = row[j];
            }
        }
        const auto res =
            nn::attention(tape.constant(random_tensor(1, 4, rng)), tape.constant(keys), tape.constant(keys));
        for (double w : res.weights.value().values()) {
            if (std::abs(w - 0.2) > 1e-15) {
                return describe("uniform weight for identical keys", w, 0.2);
            }
        }
    }

    // Empty key set is refused.
    try {
        Tape tape;
        nn::attention(tape.constant(Tensor(1, 3)), tape.constant(Tensor(0, 3)), tape.constant(Tensor(0, 3)));
        return "attention over zero keys did not raise";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyKeySet) {
            return std::string("wrong error for zero keys: ") + e.what();
        }
    }
    return {};
}

std::string check_architecture_contracts(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 31));
    const ModelDims dims{9, kUserDim, kEditDim};
    const auto same = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };

    // Edit cap: beyond th_e_max the edit contents are irrelevant.
    {
        OvidConfig cfg = small_config(seed);
        cfg.th_e_max = 10;
        OvidModel model(dims, cfg);
        for (int trial = 0; trial < 10; ++trial) {
            auto big = random_bundle(dims, 11 + uniform_index(rng, 30), rng);
            auto emptied = big;
            emptied.m_e.clear();
            auto other = random_bundle(dims, 11 + uniform_index(rng, 30), rng);
            other.x_c = big.x_c;
            other.x_u = big.x_u;
            const double y = model.predict(big);
            if (!same(y, model.predict(emptied)) || !same(y, model.predict(other))) {
                return "edit contents changed y_pred above th_e_max";
            }
            if (!(y > 0.0 && y < 1.0)) {
                return describe("y_pred outside (0,1)", y, 0.5);
            }
        }
    }

    // Edit order does not matter.
    {
        OvidModel model(dims, small_config(seed + 1));
        for (int trial = 0; trial < 10; ++trial) {
            auto b = random_bundle(dims, 2 + uniform_index(rng, 8), rng);
            auto p = b;
            shuffle(std::span<std::vector<double>>(p.m_e), rng);
            const double a = model.predict(b);
            const double c = model.predict(p);
            if (std::abs(a - c) > 1e-12) {
                return describe("y_pred after permuting edits", c, a);
            }
            if (!same(a, model.predict(b))) {
                return "eval-mode forward is not repeatable";
            }
        }
    }

    // Each ablation ignores the block it removes.
    for (auto variant : kAblationVariants) {
        const OvidConfig cfg = ablate(small_config(seed + 2), variant);
        OvidModel model(dims, cfg);
        for (int trial = 0; trial < 10; ++trial) {
            const auto b = random_bundle(dims, 1 + uniform_index(rng, 8), rng);
            auto sub = random_bundle(dims, uniform_index(rng, 9), rng);
            if (cfg.use_changeset) {
                sub.x_c = b.x_c;
            }
            if (cfg.use_user) {
                sub.x_u = b.x_u;
            }
            if (cfg.use_edits) {
                sub.m_e = b.m_e;
            }
            if (!same(model.predict(b), model.predict(sub))) {
                return "variant " + std::string(to_string(variant)) + " depends on a removed feature block";
            }
        }
    }

    // Removing both the changeset and the user branch is refused.
    try {
        ablate(small_config(seed), "-Changeset&User");
        return "-Changeset&User was accepted";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ConfigViolation) {
            return std::string("wrong error for -Changeset&User: ") + e.what();
        }
    }
    try {
        OvidConfig cfg = small_config(seed);
        cfg.use_changeset = false;
        cfg.use_user = false;
        OvidModel model(dims, cfg);
        return "model built with both changeset and user branches disabled";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ConfigViolation) {
            return std::string("wrong error for a config without changeset and user: ") + e.what();
        }
    }
    return {};
}

std::string check_metrics_oracle(std::uint64_t seed, std::size_t configurations) {
    Rng rng(derive_seed(seed, 41));
    for (std::size_t trial = 0; trial < configurations; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 200);
        // Skew the rates so empty-prediction and empty-positive cases show up.
        const double p_pos = uniform_unit(rng);
        const double p_pred = trial % 10 == 0 ? 0.0 : uniform_unit(rng);
        std::vector<Label> predicted, actual;
        for (std::size_t i = 0; i < n; ++i) {
            actual.push_back(uniform_unit(rng) < p_pos ? Label::Vandalism : Label::Regular);
            predicted.push_back(uniform_unit(rng) < p_pred ? Label::Vandalism : Label::Regular);
        }
        // Brute-force recount straight from the pairs.
        double hits = 0, predicted_pos = 0, actual_pos = 0, correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool p = predicted[i] == Label::Vandalism;
            const bool a = actual[i] == Label::Vandalism;
            hits += p && a;
            predicted_pos += p;
            actual_pos += a;
            correct += p == a;
        }
        const double precision = predicted_pos == 0 ? 1.0 : hits / predicted_pos;
        const double recall = actual_pos == 0 ? 0.0 : hits / actual_pos;
        const double f1 = precision + recall == 0 ? 0.0 : 2.0 / (1.0 / precision + 1.0 / recall);
        const double accuracy = correct / static_cast<double>(n);

        const auto m = metrics(confusion(predicted, actual));
        const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
        if (!close(m.precision, precision)) return describe("precision", m.precision, precision);
        if (!close(m.recall, recall)) return describe("recall", m.recall, recall);
        if (!close(m.f1, f1)) return describe("f1", m.f1, f1);
        if (!close(m.accuracy, accuracy)) return describe("accuracy", m.accuracy, accuracy);
    }

    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t half = 1 + uniform_index(rng, 100);
        std::vector<ScoredExample> scores;
        for (std::size_t i = 0; i < 2 * half; ++i) {
            double s;
            do {
                s = uniform_unit(rng);
            } while (s == 0.0);
            scores.push_back({s, i < half ? Label::Vandalism : Label::Regular});
        }
        const auto curve = pr_sweep(scores, 100);
        if (curve.size() != 101) {
            return "pr_sweep returned the wrong number of points";
        }
        if (curve.front().threshold != 0.0 || curve.front().precision != 0.5 || curve.front().recall != 1.0) {
            return describe("balanced precision at threshold 0", curve.front().precision, 0.5);
        }
        if (curve.back().threshold != 1.0 || curve.back().precision != 1.0 || curve.back().recall != 0.0) {
            return describe("recall at threshold 1", curve.back().recall, 0.0);
        }
        for (std::size_t i = 1; i < curve.size(); ++i) {
            if (curve[i].recall > curve[i - 1].recall) {
                return "recall increased along the sweep";
            }
        }
    }
    return {};
}

std::string check_miner_oracle() {
    const auto store = fixture_store();
    const auto expected = fixture_expected();
    const auto want_explicit = expected.at("explicit_positives").get<std::vector<ChangesetId>>();
    const auto want_deletion = expected.at("deletion_positives").get<std::vector<ChangesetId>>();
    const auto want_reverts = expected.at("reverts").get<std::vector<ChangesetId>>();

    const auto result = mine(store, 17);
    if (result.reverts != want_reverts) {
        return "revert set differs from the planted reverts";
    }
    std::vector<ChangesetId> got_explicit, got_deletion;
    std::set<ChangesetId> positives, negatives;
    for (const auto& ex : result.examples) {
        if (ex.label == Label::Vandalism) {
            positives.insert(ex.changeset);
            (ex.provenance.kind == ProvenanceKind::ExplicitMention ? got_explicit : got_deletion).push_back(ex.changeset);
        } else {
            negatives.insert(ex.changeset);
        }
        if (const auto* c = store.find(ex.changeset); c == nullptr || c->user != ex.user) {
            return "example " + std::to_string(ex.changeset) + " carries the wrong user";
        }
    }
    std::sort(got_explicit.begin(), got_explicit.end());
    std::sort(got_deletion.begin(), got_deletion.end());
    if (got_explicit != want_explicit) {
        return "explicit-mention positives differ (" + std::to_string(got_explicit.size()) + " vs " +
               std::to_string(want_explicit.size()) + ")";
    }
    if (got_deletion != want_deletion) {
        return "deletion-attributed positives differ (" + std::to_string(got_deletion.size()) + " vs " +
               std::to_string(want_deletion.size()) + ")";
    }
    if (negatives.size() != positives.size()) {
        return "dataset is not balanced";
    }
    for (auto id : negatives) {
        if (positives.contains(id) || std::binary_search(want_reverts.begin(), want_reverts.end(), id)) {
            return "negative " + std::to_string(id) + " is a positive or a revert";
        }
    }

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto split = split_user_disjoint(result.examples, SplitRatios{}, seed);
        std::set<UserId> users[3];
        const SplitPart parts[] = {SplitPart::Train, SplitPart::Validation, SplitPart::Test};
        const double targets[] = {0.7, 0.1, 0.2};
        const double total = static_cast<double>(result.examples.size());
        std::size_t seen = 0;
        for (int i = 0; i < 3; ++i) {
            for (const auto& ex : split.part(parts[i])) {
                users[i].insert(ex.user);
            }
            const double frac = static_cast<double>(split.part(parts[i]).size()) / total;
            seen += split.part(parts[i]).size();
            if (std::abs(frac - targets[i]) > 0.03) {
                return describe(("split fraction of " + std::string(to_string(parts[i]))).c_str(), frac, targets[i]);
            }
        }
        if (seen != result.examples.size()) {
            return "split lost or duplicated examples";
        }
        for (int i = 0; i < 3; ++i) {
            for (int j = i + 1; j < 3; ++j) {
                for (auto u : users[i]) {
                    if (users[j].contains(u)) {
                        return "user " + std::to_string(u) + " appears in two splits";
                    }
                }
            }
        }
    }
    return {};
}

std::string check_ingest_roundtrip() {
    const auto roundtrip = [](const ChangesetStore& store, const std::string& name) -> std::string {
        std::ostringstream first;
        save_store(store, first);
        std::istringstream in(first.str());
        const auto loaded = load_store(in);
        if (!(loaded == store)) {
            return name + ": loaded store differs from the original";
        }
        std::ostringstream second;
        save_store(loaded, second);
        if (first.str() != second.str()) {
            return name + ": second save is not byte-identical";
        }
        return {};
    };

    const auto store = fixture_store();
    if (auto err = roundtrip(store, "fixture"); !err.empty()) {
        return err;
    }
    const auto small_dir = data_dir() / "small";
    ChangesetStore plain, gz;
    ingest_files(small_dir / "changesets.osm", {small_dir / "edits.osc"}, plain);
    ingest_files(small_dir / "changesets.osm.gz", {small_dir / "edits.osc.gz"}, gz);
    if (auto err = roundtrip(plain, "small"); !err.empty()) {
        return err;
    }
    if (!(plain == gz)) {
        return "gzip input produced a different store";
    }

    for (const auto& d : fixture_expected().at("deletes")) {
        const auto* c = store.find(d.at("changeset").get<ChangesetId>());
        if (c == nullptr) {
            return "delete changeset missing";
        }
        const auto type = *parse_object_type(d.at("type").get<std::string>());
        const auto id = d.at("id").get<std::uint64_t>();
        const auto ver = d.at("ver").get<std::uint32_t>();
        const auto want = d.at("tags").get<Tags>();
        bool found = false;
        for (const auto& e : c->edits) {
            if (e.op == EditOp::Delete && e.object.type == type && e.object.id == id && e.ver == ver) {
                found = true;
                if (e.object.tags != want) {
                    return "delete of " + d.at("type").get<std::string>() + " " + std::to_string(id) +
                           " does not carry the prior tags";
                }
            }
        }
        if (!found) {
            return "delete edit of " + std::to_string(id) + " missing";
        }
    }
    return {};
}

TrainabilityReport check_trainability(std::uint64_t seed) {
    TrainabilityReport r;
    const ModelDims dims{9, kUserDim, kEditDim};
    const auto data = separable_set(dims, 64, seed);

    OvidConfig cfg = small_config(seed);
    cfg.max_epochs = 200;
    cfg.patience = 0;
    cfg.batch_size = 8;
    cfg.dropout = 0.2;
    const auto fit = train(data, data, dims, cfg);
    const auto m = metrics(evaluate_model(fit.model, data));
    r.separable_accuracy = m.accuracy;
    r.separable_epochs = fit.log.stopped_epoch;
    if (m.accuracy != 1.0) {
        r.failure = describe("separable training accuracy", m.accuracy, 1.0);
        return r;
    }

    auto inverted = data;
    for (auto& b : inverted) {
        b.label = b.label == Label::Vandalism ? Label::Regular : Label::Vandalism;
    }
    OvidConfig stop_cfg = small_config(seed);
    stop_cfg.dropout = 0.0;
    const auto stopped = train(data, inverted, dims, stop_cfg);
    r.stopped_epoch = stopped.log.stopped_epoch;
    r.best_epoch = stopped.log.best_epoch;
    if (!stopped.log.early_stopped || r.stopped_epoch > stop_cfg.patience + 1 || r.best_epoch != 1) {
        std::ostringstream ss;
        ss << "early stopping: stopped at epoch " << r.stopped_epoch << ", best epoch " << r.best_epoch;
        r.failure = ss.str();
        return r;
    }
    OvidConfig one = stop_cfg;
    one.max_epochs = 1;
    const auto after_one = train(data, inverted, dims, one);
    const auto a = stopped.model.parameters();
    const auto b = after_one.model.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i]->value == b[i]->value)) {
            r.failure = "restored parameters are not the epoch-1 parameters (" + a[i]->name + ")";
            return r;
        }
    }

    const auto serialize = [&](const TrainResult& t) {
        FeatureFile ff;
        ff.d_c = dims.d_c;
        ff.norm = fit_norm(data);
        std::ostringstream out;
        write_checkpoint(make_checkpoint(t.model, ff, data, 4, t.log), out);
        return out.str();
    };
    OvidConfig det = small_config(seed + 5);
    det.max_epochs = 20;
    const auto first = serialize(train(data, data, dims, det));
    const auto second = serialize(train(data, data, dims, det));
    r.deterministic = first == second;
    if (!r.deterministic) {
        r.failure = "identical seeds produced different checkpoints";
    }
    return r;
}

void refresh_checkpoint_crc(std::string& bytes) {
    const std::size_t crc_section = bytes.size() - 16;
    const auto crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(crc_section)));
    for (int i = 0; i < 4; ++i) {
        bytes[bytes.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
    }
}

std::size_t checkpoint_param_offset(const std::string& bytes) {
    const auto u32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
        }
        return v;
    };
    const auto u64 = [&](std::size_t at) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
        }
        return v;
    };
    std::size_t pos = 12;
    while (pos + 12 <= bytes.size()) {
        const auto tag = u32(pos);
        const auto len = u64(pos + 4);
        if (bytes.compare(pos, 4, "PRMS") == 0) {
            return pos + 12;
        }
        (void)tag;
        pos += 12 + len;
    }
    throw Error(ErrorCode::Io, "no parameter section");
}

} // namespace ovid::testkit
