#include "ovid/evaluation.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "ovid/error.hpp"

namespace ovid {

void ConfusionCounts::add(Label predicted, Label actual) noexcept {
    const bool p = predicted == Label::Vandalism;
    const bool a = actual == Label::Vandalism;
    if (p && a) {
        ++tp;
    } else if (p) {
        ++fp;
    } else if (a) {
        ++fn;
    } else {
        ++tn;
    }
}

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> actual) {
    if (predicted.size() != actual.size()) {
        throw Error(ErrorCode::InvalidArgument, "prediction and label counts differ");
    }
    ConfusionCounts cc;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        cc.add(predicted[i], actual[i]);
    }
    return cc;
}

Metrics metrics(const ConfusionCounts& cc) {
    if (cc.total() == 0) {
        throw Error(ErrorCode::EmptyEvaluation, "no examples to evaluate");
    }
    Metrics m;
    const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
    m.precision = cc.tp + cc.fp == 0 ? 1.0 : d(cc.tp) / d(cc.tp + cc.fp);
    m.recall = cc.tp + cc.fn == 0 ? 0.0 : d(cc.tp) / d(cc.tp + cc.fn);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    m.accuracy = d(cc.tp + cc.tn) / d(cc.total());
    return m;
}

PrCurve pr_sweep(std::span<const ScoredExample> scores, std::size_t n_points) {
    if (scores.empty()) {
        throw Error(ErrorCode::EmptyEvaluation, "pr_sweep needs at least one score");
    }
    if (n_points == 0) {
        throw Error(ErrorCode::InvalidArgument, "pr_sweep needs at least one interval");
    }
    PrCurve curve;
    curve.reserve(n_points + 1);
    for (std::size_t i = 0; i <= n_points; ++i) {
        const double th = static_cast<double>(i) / static_cast<double>(n_points);
        ConfusionCounts cc;
        for (const auto& s : scores) {
            cc.add(classify(s.score, th), s.label);
        }
        const auto m = metrics(cc);
        curve.push_back({th, m.precision, m.recall, m.f1, m.accuracy});
    }
    return curve;
}

void write_pr_csv(const PrCurve& curve, std::ostream& out) {
    out << "threshold,precision,recall\n";
    out << std::setprecision(17);
    for (const auto& p : curve) {
        out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
    }
}

std::vector<Label> random_baseline(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Label> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(uniform_index(rng, 2) == 1 ? Label::Vandalism : Label::Regular);
    }
    return out;
}

// ---------------------------------------------------------------------------

int rule_score(const FeatureBundle& raw, std::size_t edit, const RuleThresholds& t) {
    const auto& e = raw.m_e.at(edit);
    int score = 0;
    score += raw.x_u.at(slot::kContributions) < t.min_contributions ? 1 : 0;
    score += e.at(slot::kValidTags) < t.min_valid_tags ? 1 : 0;
    score += e.at(slot::kVersion) >= t.max_version ? 1 : 0;
    score += e.at(slot::kNameChanged) > 0.5 ? 1 : 0;
    const bool is_delete = e.at(slot::kOpBegin + static_cast<std::size_t>(EditOp::Delete)) > 0.5;
    score += is_delete && raw.x_c.at(slot::kDeletes) >= t.large_deletion ? 1 : 0;
    return score;
}

Label rule_baseline(const FeatureBundle& raw, const RuleThresholds& t) {
    for (std::size_t i = 0; i < raw.m_e.size(); ++i) {
        if (rule_score(raw, i, t) >= t.min_score) {
            return Label::Vandalism;
        }
    }
    return Label::Regular;
}

RuleGrid RuleGrid::defaults() {
    return RuleGrid{{1, 5, 10, 50, 100, 500}, {1, 2, 3}, {2, 5, 10, 20, 50}, {1, 5, 10, 50, 100}, {1, 2, 3}};
}

std::size_t RuleGrid::size() const noexcept {
    return min_contributions.size() * min_valid_tags.size() * max_version.size() * large_deletion.size() *
           min_score.size();
}

GridSearchResult grid_search_rules(std::span<const FeatureBundle> raw, const RuleGrid& grid) {
    if (raw.empty()) {
        throw Error(ErrorCode::EmptyEvaluation, "grid search needs labelled examples");
    }
    if (grid.size() == 0) {
        throw Error(ErrorCode::InvalidArgument, "rule grid has an empty axis");
    }
    GridSearchResult result;
    bool first = true;
    RuleThresholds t;
    for (double c : grid.min_contributions) {
        t.min_contributions = c;
        for (double v : grid.min_valid_tags) {
            t.min_valid_tags = v;
            for (double ver : grid.max_version) {
                t.max_version = ver;
                for (double del : grid.large_deletion) {
                    t.large_deletion = del;
                    for (int s : grid.min_score) {
                        t.min_score = s;
                        ConfusionCounts cc;
                        for (const auto& b : raw) {
                            cc.add(rule_baseline(b, t), b.label);
                        }
                        const auto m = metrics(cc);
                        ++result.evaluated;
                        if (first || m.f1 > result.best_metrics.f1) {
                            result.best = t;
                            result.best_metrics = m;
                            first = false;
                        }
                    }
                }
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

std::vector<OvidConfig> sample_configs(const SearchSpace& space, std::size_t n_trials, std::uint64_t seed,
                                       const OvidConfig& base) {
    Rng rng(seed);
    const auto pick = [&](const auto& values) {
        if (values.empty()) {
            throw Error(ErrorCode::InvalidArgument, "search space has an empty axis");
        }
        return values[uniform_index(rng, values.size())];
    };
    std::vector<OvidConfig> out;
    out.reserve(n_trials);
    for (std::size_t i = 0; i < n_trials; ++i) {
        OvidConfig c = base;
        c.th_e_max = pick(space.th_e_max);
        c.n_pred = pick(space.n_pred);
        c.n_head = pick(space.n_head);
        c.d_h = pick(space.d_h);
        c.dropout = pick(space.dropout);
        c.lambda = pick(space.lambda);
        c.seed = derive_seed(seed, i);
        out.push_back(c);
    }
    return out;
}

std::size_t worker_threads(std::size_t requested) {
    std::size_t n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("OVID_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const auto cap = std::strtoull(env, &end, 10);
        if (end != env && cap > 0) {
            n = std::min<std::size_t>(n, cap);
        }
    }
    return std::max<std::size_t>(n, 1);
}

ConfusionCounts evaluate_model(const OvidModel& model, std::span<const FeatureBundle> normalized) {
    ConfusionCounts cc;
    for (const auto& b : normalized) {
        cc.add(classify(model.predict(b), model.config().th_class), b.label);
    }
    return cc;
}

SearchResult random_search(const SearchSpace& space, std::size_t n_trials, std::uint64_t seed,
                           std::span<const FeatureBundle> train_set, std::span<const FeatureBundle> val_set,
                           ModelDims dims, const OvidConfig& base, std::size_t threads) {
    if (n_trials == 0) {
        throw Error(ErrorCode::InvalidArgument, "random search needs at least one trial");
    }
    const auto configs = sample_configs(space, n_trials, seed, base);
    std::vector<Trial> trials(n_trials);
    std::vector<std::optional<TrainResult>> results(n_trials);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto work = [&] {
        for (std::size_t i = next++; i < n_trials; i = next++) {
            try {
                auto r = train(train_set, val_set, dims, configs[i]);
                Trial& t = trials[i];
                t.index = i;
                t.config = configs[i];
                t.validation = metrics(evaluate_model(r.model, val_set));
                t.val_loss = r.log.best_val_loss;
                t.best_epoch = r.log.best_epoch;
                t.stopped_epoch = r.log.stopped_epoch;
                results[i] = std::move(r);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = n_trials;
            }
        }
    };
    const std::size_t n_workers = std::min(worker_threads(threads), n_trials);
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) {
        pool.emplace_back(work);
    }
    work();
    for (auto& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < n_trials; ++i) {
        const auto& a = trials[i].validation;
        const auto& b = trials[best].validation;
        if (a.f1 > b.f1 || (a.f1 == b.f1 && a.accuracy > b.accuracy)) {
            best = i;
        }
    }
    SearchResult out;
    out.trials = std::move(trials);
    out.best_index = best;
    out.best_model = std::move(results[best]->model);
    out.best_log = std::move(results[best]->log);
    return out;
}

// ---------------------------------------------------------------------------

void write_report_table(const EvalReport& report, std::ostream& out) {
    out << "split: " << report.split << '\n';
    out << std::left << std::setw(22) << "method" << std::right << std::setw(10) << "precision" << std::setw(10)
        << "recall" << std::setw(10) << "f1" << std::setw(10) << "accuracy" << std::setw(8) << "tp" << std::setw(8)
        << "fp" << std::setw(8) << "tn" << std::setw(8) << "fn" << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& r : report.rows) {
        out << std::left << std::setw(22) << r.method << std::right << std::setw(10) << r.metrics.precision
            << std::setw(10) << r.metrics.recall << std::setw(10) << r.metrics.f1 << std::setw(10)
            << r.metrics.accuracy << std::setw(8) << r.counts.tp << std::setw(8) << r.counts.fp << std::setw(8)
            << r.counts.tn << std::setw(8) << r.counts.fn << '\n';
    }
    for (const auto& r : report.rows) {
        if (!r.note.empty()) {
            out << "  " << r.method << ": " << r.note << '\n';
        }
    }
    out << std::defaultfloat;
}

void write_report_jsonl(const EvalReport& report, std::ostream& out) {
    for (const auto& r : report.rows) {
        nlohmann::json j{{"split", report.split},
                         {"method", r.method},
                         {"precision", r.metrics.precision},
                         {"recall", r.metrics.recall},
                         {"f1", r.metrics.f1},
                         {"accuracy", r.metrics.accuracy},
                         {"tp", r.counts.tp},
                         {"fp", r.counts.fp},
                         {"tn", r.counts.tn},
                         {"fn", r.counts.fn}};
        if (!r.note.empty()) {
            j["note"] = r.note;
        }
        out << j.dump() << '\n';
    }
}

} // namespace ovid
