#include "ovid/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ovid/error.hpp"

namespace ovid {
namespace {

using nn::Activation;
using nn::Mode;
using nn::Tape;
using nn::Tensor;
using nn::Var;

[[noreturn]] void violation(const std::string& msg) {
    throw Error(ErrorCode::ConfigViolation, msg);
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::InvalidArgument,
                    "config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "yes") {
        return true;
    }
    if (text == "false" || text == "0" || text == "no") {
        return false;
    }
    throw Error(ErrorCode::InvalidArgument,
                "config key '" + std::string(key) + "': expected a boolean, got '" + std::string(text) + "'");
}

template <typename T>
bool one_of(T v, std::initializer_list<T> set) {
    return std::find(set.begin(), set.end(), v) != set.end();
}

} // namespace

void OvidConfig::validate() const {
    if (!use_changeset && !use_user) {
        violation("at least one of the changeset and user branches must stay enabled");
    }
    if (d_h == 0 || n_head == 0 || n_pred == 0) {
        violation("d_h, n_head and n_pred must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        violation("dropout must lie in [0, 1), got " + format_double(dropout));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        violation("lambda must be a non-negative number");
    }
    if (!(th_class >= 0.0 && th_class <= 1.0)) {
        violation("th_class must lie in [0, 1]");
    }
    if (batch_size == 0 || max_epochs == 0) {
        violation("batch_size and max_epochs must be positive");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        violation("learning_rate must be a non-negative number");
    }
}

bool OvidConfig::in_search_space() const {
    return one_of<std::size_t>(th_e_max, {10, 20, 30}) && n_pred >= 1 && n_pred <= 5 &&
           one_of<std::size_t>(n_head, {5, 10, 15, 20}) && one_of<std::size_t>(d_h, {12, 24, 36, 48}) &&
           one_of(dropout, {0.4, 0.5, 0.6, 0.7}) && one_of(lambda, {0.005, 0.01, 0.02});
}

void apply_config_entry(OvidConfig& c, std::string_view key, std::string_view value) {
    value = trim(value);
    if (key == "th_e_max") {
        c.th_e_max = parse_number<std::size_t>(key, value);
    } else if (key == "n_pred") {
        c.n_pred = parse_number<std::size_t>(key, value);
    } else if (key == "n_head") {
        c.n_head = parse_number<std::size_t>(key, value);
    } else if (key == "d_h") {
        c.d_h = parse_number<std::size_t>(key, value);
    } else if (key == "dropout") {
        c.dropout = parse_number<double>(key, value);
    } else if (key == "lambda") {
        c.lambda = parse_number<double>(key, value);
    } else if (key == "th_class") {
        c.th_class = parse_number<double>(key, value);
    } else if (key == "use_changeset") {
        c.use_changeset = parse_bool(key, value);
    } else if (key == "use_user") {
        c.use_user = parse_bool(key, value);
    } else if (key == "use_edits") {
        c.use_edits = parse_bool(key, value);
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "batch_size") {
        c.batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "max_epochs") {
        c.max_epochs = parse_number<std::size_t>(key, value);
    } else if (key == "patience") {
        c.patience = parse_number<std::size_t>(key, value);
    } else if (key == "learning_rate") {
        c.learning_rate = parse_number<double>(key, value);
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown config key '" + std::string(key) + "'");
    }
}

OvidConfig parse_config(std::string_view text, OvidConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
        }
        apply_config_entry(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

std::string format_config(const OvidConfig& c) {
    std::ostringstream out;
    const auto b = [](bool v) { return v ? "true" : "false"; };
    out << "th_e_max = " << c.th_e_max << '\n'
        << "n_pred = " << c.n_pred << '\n'
        << "n_head = " << c.n_head << '\n'
        << "d_h = " << c.d_h << '\n'
        << "dropout = " << format_double(c.dropout) << '\n'
        << "lambda = " << format_double(c.lambda) << '\n'
        << "th_class = " << format_double(c.th_class) << '\n'
        << "use_changeset = " << b(c.use_changeset) << '\n'
        << "use_user = " << b(c.use_user) << '\n'
        << "use_edits = " << b(c.use_edits) << '\n'
        << "seed = " << c.seed << '\n'
        << "batch_size = " << c.batch_size << '\n'
        << "max_epochs = " << c.max_epochs << '\n'
        << "patience = " << c.patience << '\n'
        << "learning_rate = " << format_double(c.learning_rate) << '\n';
    return out.str();
}

std::string_view to_string(AblationVariant v) noexcept {
    switch (v) {
    case AblationVariant::NoChangeset: return "-Changeset";
    case AblationVariant::NoUser: return "-User";
    case AblationVariant::NoEdits: return "-Edits";
    case AblationVariant::NoChangesetEdits: return "-Changeset&Edits";
    case AblationVariant::NoUserEdits: return "-User&Edits";
    }
    return "?";
}

AblationVariant parse_ablation(std::string_view text) {
    for (auto v : kAblationVariants) {
        if (to_string(v) == text) {
            return v;
        }
    }
    if (text == "-Changeset&User" || text == "-User&Changeset" || text == "-Changeset&User&Edits") {
        violation("variant " + std::string(text) + " removes both the changeset and user branches");
    }
    throw Error(ErrorCode::InvalidArgument, "unknown ablation variant '" + std::string(text) + "'");
}

OvidConfig ablate(OvidConfig c, AblationVariant v) {
    switch (v) {
    case AblationVariant::NoChangeset: c.use_changeset = false; break;
    case AblationVariant::NoUser: c.use_user = false; break;
    case AblationVariant::NoEdits: c.use_edits = false; break;
    case AblationVariant::NoChangesetEdits:
        c.use_changeset = false;
        c.use_edits = false;
        break;
    case AblationVariant::NoUserEdits:
        c.use_user = false;
        c.use_edits = false;
        break;
    }
    c.validate();
    return c;
}

OvidConfig ablate(const OvidConfig& config, std::string_view variant) {
    return ablate(config, parse_ablation(variant));
}

Label classify(double y_pred, double th_class) {
    return y_pred > th_class ? Label::Vandalism : Label::Regular;
}

// ---------------------------------------------------------------------------

OvidModel::OvidModel(ModelDims dims, OvidConfig config) : dims_(dims), config_(config) {
    config_.validate();
    if (dims_.d_c == 0 || dims_.d_u == 0 || dims_.d_e == 0) {
        throw Error(ErrorCode::DimMismatch, "feature dimensions must be positive");
    }
    Rng rng(derive_seed(config_.seed, 0));
    const std::size_t d = config_.d_h;
    std::size_t fused = 0;
    if (config_.use_changeset) {
        fc_c_.emplace("fc_c", dims_.d_c, d, Activation::ReLU, rng);
        fused += d;
    }
    if (config_.use_user) {
        fc_u_.emplace("fc_u", dims_.d_u, d, Activation::ReLU, rng);
        fused += d;
    }
    fc_cu_ = nn::Linear("fc_cu", fused, d, Activation::ReLU, rng);
    ln_cu_ = nn::LayerNorm("ln_cu", d);
    std::size_t width = d;
    if (config_.use_edits) {
        fc_e_.emplace("fc_e", dims_.d_e, d, Activation::ReLU, rng);
        attention_.emplace("attention", config_.n_head, d, rng);
        fc_E_.emplace("fc_E", d, d, Activation::ReLU, rng);
        ln_E_.emplace("ln_E", d);
        width += d;
    }
    for (std::size_t i = 0; i < config_.n_pred; ++i) {
        const std::string name = "pred" + std::to_string(i);
        fc_p_.emplace_back(name + ".fc", i == 0 ? width : d, d, Activation::ReLU, rng);
        ln_p_.emplace_back(name + ".ln", d);
    }
    out_ = nn::Linear("out", d, 1, Activation::None, rng);
}

void OvidModel::check_dims(const FeatureBundle& b) const {
    const auto fail = [&](const std::string& what, std::size_t got, std::size_t want) {
        throw Error(ErrorCode::DimMismatch, "changeset " + std::to_string(b.changeset) + ": " + what + " has " +
                                                std::to_string(got) + " values, model expects " +
                                                std::to_string(want));
    };
    if (b.x_c.size() != dims_.d_c) {
        fail("X_c", b.x_c.size(), dims_.d_c);
    }
    if (b.x_u.size() != dims_.d_u) {
        fail("X_u", b.x_u.size(), dims_.d_u);
    }
    for (const auto& col : b.m_e) {
        if (col.size() != dims_.d_e) {
            fail("an edit column", col.size(), dims_.d_e);
        }
    }
}

Var OvidModel::forward(Tape& tape, const FeatureBundle& b, Mode mode, Rng& rng) {
    check_dims(b);
    std::vector<Var> branches;
    if (fc_c_) {
        branches.push_back(fc_c_->forward(tape, tape.constant(Tensor::row(b.x_c)), Activation::ReLU));
    }
    if (fc_u_) {
        branches.push_back(fc_u_->forward(tape, tape.constant(Tensor::row(b.x_u)), Activation::ReLU));
    }
    const Var fused = branches.size() == 1 ? branches.front() : nn::concat_cols(branches);
    const Var x_cu = ln_cu_.forward(tape, fc_cu_.forward(tape, fused, Activation::ReLU));

    Var x_p = x_cu;
    if (config_.use_edits) {
        const std::size_t n = b.n_edits();
        Var x_E;
        if (n > 0 && n <= config_.th_e_max && !b.missing_history) {
            Tensor m(n, dims_.d_e);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(b.m_e[i].begin(), b.m_e[i].end(), m.values().begin() + i * dims_.d_e);
            }
            const Var m_e = fc_e_->forward(tape, tape.constant(std::move(m)), Activation::ReLU);
            const Var attended = attention_->forward(tape, x_cu, m_e, m_e);
            x_E = ln_E_->forward(tape, fc_E_->forward(tape, attended, Activation::ReLU));
        } else {
            x_E = tape.constant(Tensor(1, config_.d_h));
        }
        const Var parts[] = {x_cu, x_E};
        x_p = nn::concat_cols(parts);
    }
    for (std::size_t i = 0; i < fc_p_.size(); ++i) {
        const Var h = nn::dropout(fc_p_[i].forward(tape, x_p, Activation::ReLU), config_.dropout, mode, rng);
        x_p = ln_p_[i].forward(tape, h);
    }
    return nn::sigmoid(out_.forward(tape, x_p, Activation::None));
}

double OvidModel::predict(const FeatureBundle& bundle) const {
    // Eval tapes never run backward, so the parameters are only read.
    auto& self = const_cast<OvidModel&>(*this);
    Tape tape;
    Rng unused(0);
    return self.forward(tape, bundle, Mode::Eval, unused).value()[0];
}

std::vector<double> OvidModel::predict(std::span<const FeatureBundle> bundles) const {
    std::vector<double> out;
    out.reserve(bundles.size());
    for (const auto& b : bundles) {
        out.push_back(predict(b));
    }
    return out;
}

std::vector<nn::Parameter*> OvidModel::parameters() {
    std::vector<nn::Parameter*> out;
    const auto lin = [&](nn::Linear& l) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    };
    const auto norm = [&](nn::LayerNorm& l) {
        out.push_back(&l.gain);
        out.push_back(&l.bias);
    };
    if (fc_c_) {
        lin(*fc_c_);
    }
    if (fc_u_) {
        lin(*fc_u_);
    }
    lin(fc_cu_);
    norm(ln_cu_);
    if (fc_e_) {
        lin(*fc_e_);
        for (auto& h : attention_->heads) {
            out.push_back(&h.wq);
            out.push_back(&h.wk);
            out.push_back(&h.wv);
        }
        out.push_back(&attention_->w_out);
        lin(*fc_E_);
        norm(*ln_E_);
    }
    for (std::size_t i = 0; i < fc_p_.size(); ++i) {
        lin(fc_p_[i]);
        norm(ln_p_[i]);
    }
    lin(out_);
    return out;
}

std::vector<const nn::Parameter*> OvidModel::parameters() const {
    auto mutable_params = const_cast<OvidModel&>(*this).parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

// ---------------------------------------------------------------------------

double evaluate_loss(const OvidModel& model, std::span<const FeatureBundle> bundles) {
    if (bundles.empty()) {
        throw Error(ErrorCode::EmptySplit, "cannot evaluate the loss of an empty set");
    }
    double total = 0.0;
    for (const auto& b : bundles) {
        const double q = std::clamp(model.predict(b), nn::kProbabilityClamp, 1.0 - nn::kProbabilityClamp);
        total -= b.label == Label::Vandalism ? std::log(q) : std::log(1.0 - q);
    }
    return total / static_cast<double>(bundles.size());
}

TrainResult train(std::span<const FeatureBundle> train_set, std::span<const FeatureBundle> val_set, ModelDims dims,
                  const OvidConfig& config) {
    config.validate();
    if (train_set.empty()) {
        throw Error(ErrorCode::EmptySplit, "training split is empty");
    }
    if (val_set.empty()) {
        throw Error(ErrorCode::EmptySplit, "validation split is empty");
    }
    TrainResult result{OvidModel(dims, config), {}};
    OvidModel& model = result.model;
    for (const auto& b : train_set) {
        model.check_dims(b);
    }
    for (const auto& b : val_set) {
        model.check_dims(b);
    }

    Rng order_rng(derive_seed(config.seed, 1));
    Rng dropout_rng(derive_seed(config.seed, 2));
    nn::Adam adam(nn::AdamOptions{config.learning_rate});
    const auto params = model.parameters();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    OvidModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    Tape tape;
    TrainingLog& log = result.log;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), order_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            tape.clear();
            for (auto* p : params) {
                p->zero_grad();
            }
            std::vector<Var> preds;
            std::vector<double> targets;
            for (std::size_t i = start; i < end; ++i) {
                const auto& b = train_set[order[i]];
                preds.push_back(model.forward(tape, b, Mode::Train, dropout_rng));
                targets.push_back(b.label == Label::Vandalism ? 1.0 : 0.0);
            }
            Var loss = nn::bce_loss(nn::stack_rows(preds), targets);
            loss_sum += loss.value()[0] * static_cast<double>(end - start);
            if (config.lambda > 0.0) {
                for (auto* p : params) {
                    if (p->regularized) {
                        loss = nn::add(loss, nn::scale(nn::sum_squares(tape.param(*p)), config.lambda));
                    }
                }
            }
            tape.backward(loss);
            adam.step(params);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_loss = evaluate_loss(model, val_set);
        rec.improved = rec.val_loss < best_val;
        log.epochs.push_back(rec);
        log.stopped_epoch = epoch;
        if (rec.improved) {
            best_val = rec.val_loss;
            best = model;
            log.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience && config.patience > 0) {
            log.early_stopped = true;
            break;
        }
    }
    log.best_val_loss = best_val;
    model = std::move(best);
    return result;
}

} // namespace ovid
