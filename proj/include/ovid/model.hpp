#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ovid/features.hpp"
#include "ovid/nn/adam.hpp"
#include "ovid/nn/layers.hpp"

namespace ovid {

struct OvidConfig {
    std::size_t th_e_max = 20;
    std::size_t n_pred = 2;
    std::size_t n_head = 5;
    std::size_t d_h = 24;
    double dropout = 0.5;
    double lambda = 0.01;
    double th_class = 0.5;
    bool use_changeset = true;
    bool use_user = true;
    bool use_edits = true;
    std::uint64_t seed = 0;

    // Optimisation.
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    double learning_rate = 1e-3;

    /// Raises ConfigViolation for unusable values, including both the
    /// changeset and user branches switched off.
    void validate() const;
    /// Membership in the tuner's search space.
    bool in_search_space() const;

    friend bool operator==(const OvidConfig&, const OvidConfig&) = default;
};

/// Flat "key = value" text, one field per line, '#' starts a comment.
/// Keys are the OvidConfig field names. Unknown keys raise InvalidArgument.
OvidConfig parse_config(std::string_view text, OvidConfig base = {});
void apply_config_entry(OvidConfig& config, std::string_view key, std::string_view value);
std::string format_config(const OvidConfig& config);

enum class AblationVariant : std::uint8_t { NoChangeset, NoUser, NoEdits, NoChangesetEdits, NoUserEdits };

inline constexpr AblationVariant kAblationVariants[] = {AblationVariant::NoChangeset, AblationVariant::NoUser,
                                                         AblationVariant::NoEdits, AblationVariant::NoChangesetEdits,
                                                         AblationVariant::NoUserEdits};

std::string_view to_string(AblationVariant v) noexcept;
/// Accepts "-Changeset", "-User", "-Edits", "-Changeset&Edits", "-User&Edits".
/// "-Changeset&User" raises ConfigViolation, anything else InvalidArgument.
AblationVariant parse_ablation(std::string_view text);
OvidConfig ablate(OvidConfig config, AblationVariant variant);
OvidConfig ablate(const OvidConfig& config, std::string_view variant);

struct ModelDims {
    std::size_t d_c = 0;
    std::size_t d_u = kUserDim;
    std::size_t d_e = kEditDim;

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Vandalism iff y_pred > th_class.
Label classify(double y_pred, double th_class);

class OvidModel {
public:
    OvidModel() = default;
    /// Parameters are initialised from config.seed.
    OvidModel(ModelDims dims, OvidConfig config);

    /// Records the forward pass for one normalised bundle; returns the 1x1 y_pred.
    nn::Var forward(nn::Tape& tape, const FeatureBundle& bundle, nn::Mode mode, Rng& rng);
    /// Eval-mode prediction.
    double predict(const FeatureBundle& bundle) const;
    std::vector<double> predict(std::span<const FeatureBundle> bundles) const;

    /// Stable order; names are unique.
    std::vector<nn::Parameter*> parameters();
    std::vector<const nn::Parameter*> parameters() const;

    const ModelDims& dims() const noexcept { return dims_; }
    const OvidConfig& config() const noexcept { return config_; }

    /// Raises DimMismatch when the bundle does not fit the model.
    void check_dims(const FeatureBundle& bundle) const;

private:
    ModelDims dims_;
    OvidConfig config_;
    std::optional<nn::Linear> fc_c_;
    std::optional<nn::Linear> fc_u_;
    nn::Linear fc_cu_;
    nn::LayerNorm ln_cu_;
    std::optional<nn::Linear> fc_e_;
    std::optional<nn::MultiHeadAttention> attention_;
    std::optional<nn::Linear> fc_E_;
    std::optional<nn::LayerNorm> ln_E_;
    std::vector<nn::Linear> fc_p_;
    std::vector<nn::LayerNorm> ln_p_;
    nn::Linear out_;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool improved = false;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::size_t stopped_epoch = 0;
    bool early_stopped = false;
};

struct TrainResult {
    OvidModel model;
    TrainingLog log;
};

/// Mean BCE (no penalty) over eval-mode predictions.
double evaluate_loss(const OvidModel& model, std::span<const FeatureBundle> bundles);

/// Mini-batch ADAM on mean BCE + lambda * sum of squared weights. Early stopping
/// on validation BCE; the best-validation parameters are restored. Bundles must
/// already be normalised. Raises EmptySplit when either set is empty.
TrainResult train(std::span<const FeatureBundle> train_set, std::span<const FeatureBundle> val_set, ModelDims dims,
                  const OvidConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
    OvidModel model;
    NormStats norm;
    std::vector<std::string> editors;
    std::uint64_t editor_hash = 0;
    Top12Mode top12 = Top12Mode::Additions;
    /// Unnormalised bundles with their stored predictions.
    std::vector<FeatureBundle> reference_batch;
    std::vector<double> reference_predictions;
    TrainingLog log;

    /// Applies the stored normalisation, then predicts.
    double predict_raw(const FeatureBundle& raw) const;
    /// Fills reference_predictions from reference_batch.
    void seal();
};

/// Builds a checkpoint around a trained model; the reference batch is the
/// first `n_reference` raw bundles given.
ModelCheckpoint make_checkpoint(OvidModel model, const FeatureFile& features, std::span<const FeatureBundle> raw,
                                std::size_t n_reference = 8, TrainingLog log = {});

void write_checkpoint(const ModelCheckpoint& cp, std::ostream& out);
void save_checkpoint(const ModelCheckpoint& cp, const std::filesystem::path& path);
/// Raises Io, FormatVersionMismatch, ChecksumMismatch or ReferencePredictionMismatch.
ModelCheckpoint read_checkpoint(std::istream& in);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Raises DimMismatch when the feature file was produced with different
/// dimensions or a different editor vocabulary.
void check_compatible(const ModelCheckpoint& cp, const FeatureFile& features);

} // namespace ovid
