#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovid/model.hpp"

namespace ovid {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
    void add(Label predicted, Label actual) noexcept;

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> actual);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

/// Precision is 1 with no predicted positives, recall 0 with no actual
/// positives, F1 0 when both are 0. Raises EmptyEvaluation on zero counts.
Metrics metrics(const ConfusionCounts& cc);

struct ScoredExample {
    double score = 0.0;
    Label label = Label::Regular;
};

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

using PrCurve = std::vector<PrPoint>;

/// Thresholds i / n_points for i = 0..n_points, classifying score > threshold.
PrCurve pr_sweep(std::span<const ScoredExample> scores, std::size_t n_points = 100);
void write_pr_csv(const PrCurve& curve, std::ostream& out);

/// Fair coin per example.
std::vector<Label> random_baseline(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rule baseline over raw (unnormalised) features. Per edit one point each for:
//   user contributions < min_contributions
//   valid tags < min_valid_tags
//   version >= max_version
//   name changed
//   delete edit in a changeset with at least `large_deletion` deletes
// An edit is flagged at score >= min_score; a changeset when any edit is.

struct RuleThresholds {
    double min_contributions = 10;
    double min_valid_tags = 1;
    double max_version = 10;
    double large_deletion = 10;
    int min_score = 2;

    friend bool operator==(const RuleThresholds&, const RuleThresholds&) = default;
};

int rule_score(const FeatureBundle& raw, std::size_t edit, const RuleThresholds& t);
Label rule_baseline(const FeatureBundle& raw, const RuleThresholds& t);

struct RuleGrid {
    std::vector<double> min_contributions;
    std::vector<double> min_valid_tags;
    std::vector<double> max_version;
    std::vector<double> large_deletion;
    std::vector<int> min_score;

    static RuleGrid defaults();
    std::size_t size() const noexcept;
};

struct GridSearchResult {
    RuleThresholds best;
    Metrics best_metrics;
    std::size_t evaluated = 0;
};

/// Exhaustive search maximising F1; ties keep the earliest combination in
/// nested order (contributions, valid tags, version, deletion, score).
GridSearchResult grid_search_rules(std::span<const FeatureBundle> raw, const RuleGrid& grid);

// ---------------------------------------------------------------------------
// Random hyperparameter search.

struct SearchSpace {
    std::vector<std::size_t> th_e_max{10, 20, 30};
    std::vector<std::size_t> n_pred{1, 2, 3, 4, 5};
    std::vector<std::size_t> n_head{5, 10, 15, 20};
    std::vector<std::size_t> d_h{12, 24, 36, 48};
    std::vector<double> dropout{0.4, 0.5, 0.6, 0.7};
    std::vector<double> lambda{0.005, 0.01, 0.02};
};

/// Uniform draws with replacement; trial i gets seed derive_seed(seed, i).
std::vector<OvidConfig> sample_configs(const SearchSpace& space, std::size_t n_trials, std::uint64_t seed,
                                       const OvidConfig& base = {});

struct Trial {
    std::size_t index = 0;
    OvidConfig config;
    Metrics validation;
    double val_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t stopped_epoch = 0;
};

struct SearchResult {
    std::vector<Trial> trials;
    std::size_t best_index = 0;
    OvidModel best_model;
    TrainingLog best_log;

    const Trial& best() const { return trials.at(best_index); }
};

/// Worker count: `requested` (0 = hardware concurrency), capped by OVID_THREADS.
std::size_t worker_threads(std::size_t requested = 0);

/// Trains every sampled config, ranking by validation F1, then validation
/// accuracy, then trial index. Results do not depend on the thread count.
SearchResult random_search(const SearchSpace& space, std::size_t n_trials, std::uint64_t seed,
                           std::span<const FeatureBundle> train_set, std::span<const FeatureBundle> val_set,
                           ModelDims dims, const OvidConfig& base = {}, std::size_t threads = 0);

ConfusionCounts evaluate_model(const OvidModel& model, std::span<const FeatureBundle> normalized);

// ---------------------------------------------------------------------------
// Reports.

struct ReportRow {
    std::string method;
    ConfusionCounts counts;
    Metrics metrics;
    std::string note;
};

struct EvalReport {
    std::string split;
    std::vector<ReportRow> rows;
};

void write_report_table(const EvalReport& report, std::ostream& out);
void write_report_jsonl(const EvalReport& report, std::ostream& out);

} // namespace ovid
