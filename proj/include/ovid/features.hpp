#pragma once

// Changeset, user and edit feature extraction plus z-score normalisation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ovid/miner.hpp"
#include "ovid/osm.hpp"
#include "ovid/store.hpp"
#include "ovid/user_history.hpp"

namespace ovid {

/// Longest-prefix vocabulary over the created_by tag with a trailing "other" slot.
class EditorVocabulary {
public:
    EditorVocabulary() = default;
    explicit EditorVocabulary(std::vector<std::string> prefixes);

    /// One prefix per non-empty, non-# line.
    static EditorVocabulary parse(std::string_view text);
    static const EditorVocabulary& builtin();

    /// Number of one-hot slots, including "other".
    std::size_t size() const noexcept { return prefixes_.size() + 1; }
    std::size_t index_of(const std::optional<std::string>& created_by) const;
    /// Slot names, "other" last.
    std::vector<std::string> names() const;
    /// FNV-1a over the ordered slot names.
    std::uint64_t hash() const;

private:
    std::vector<std::string> prefixes_;
};

/// Established (key, value) pairs. Keys listed with value "*" accept any value.
class MapFeatures {
public:
    static MapFeatures parse(std::string_view tsv);
    static const MapFeatures& builtin();

    bool is_valid(const std::string& key, const std::string& value) const;
    std::size_t count_valid(const Tags& tags) const;
    std::size_t size() const noexcept { return pairs_.size() + any_value_.size(); }

private:
    std::set<std::pair<std::string, std::string>, std::less<>> pairs_;
    std::set<std::string, std::less<>> any_value_;
};

enum class Top12Mode : std::uint8_t {
    /// Number of top-12 key additions across prior edits.
    Additions,
    /// Number of distinct top-12 keys the user has added (at most 12).
    DistinctKeys,
};

struct FeatureConfig {
    EditorVocabulary editors = EditorVocabulary::builtin();
    const MapFeatures* map_features = &MapFeatures::builtin();
    Top12Mode top12 = Top12Mode::Additions;
};

inline constexpr std::size_t kUserDim = 7;
inline constexpr std::size_t kEditDim = 15;
inline std::size_t changeset_dim(const EditorVocabulary& v) { return 11 + v.size(); }

// Slot positions inside the three vectors.
namespace slot {
inline constexpr std::size_t kCreates = 0, kModifications = 1, kDeletes = 2, kEdits = 3, kMinLat = 4, kMaxLat = 5,
                             kMinLon = 6, kMaxLon = 7, kBboxSize = 8, kEditorBegin = 9;
inline constexpr std::size_t kPastCreates = 0, kPastModifications = 1, kPastDeletes = 2, kContributions = 3,
                             kTop12 = 4, kAccountCreation = 5, kActiveWeeks = 6;
inline constexpr std::size_t kTypeBegin = 0, kOpBegin = 3, kVersion = 6, kPreviousAuthors = 7,
                             kTimeToPrevious = 8, kTagsTotal = 9, kTagsAdded = 10, kTagsDeleted = 11,
                             kValidTags = 12, kPreviousValidTags = 13, kNameChanged = 14;
} // namespace slot

using EditFeatureVector = std::array<double, kEditDim>;
using UserFeatureVector = std::array<double, kUserDim>;

/// Days from 2004-01-01 to `t`, clamped at zero.
double days_since_2004(Timestamp t);

/// Unicode scalar values in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

std::vector<double> changeset_features(const Changeset& c, const FeatureConfig& config);
UserFeatureVector user_features(const Changeset& c, const UserHistoryIndex& history, const FeatureConfig& config);

struct EditFeatures {
    EditFeatureVector values{};
    /// Modify/Delete without a previous version in the store; history slots are 0.
    bool missing_history = false;
};

EditFeatures edit_features(const Edit& e, const ChangesetStore& store, const FeatureConfig& config);

struct EditMatrix {
    /// One column per edit, in changeset order.
    std::vector<EditFeatureVector> columns;
    bool missing_history = false;
};

EditMatrix edit_matrix(const Changeset& c, const ChangesetStore& store, const FeatureConfig& config);

/// X_c, X_u and M_e for one labeled changeset.
struct FeatureBundle {
    ChangesetId changeset = 0;
    Label label = Label::Regular;
    UserId user = 0;
    std::optional<SplitPart> part;
    std::vector<double> x_c;
    std::vector<double> x_u;
    std::vector<std::vector<double>> m_e;
    bool missing_history = false;

    std::size_t n_edits() const noexcept { return m_e.size(); }

    friend bool operator==(const FeatureBundle&, const FeatureBundle&) = default;
};

FeatureBundle featurize(const Changeset& c, const ChangesetStore& store, const UserHistoryIndex& history,
                        const FeatureConfig& config);

struct NormBlock {
    std::vector<double> mean;
    std::vector<double> std;

    friend bool operator==(const NormBlock&, const NormBlock&) = default;
};

struct NormStats {
    NormBlock changeset;
    NormBlock user;
    NormBlock edit;

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Population mean/std per dimension; edit statistics pool every edit column.
NormStats fit_norm(std::span<const FeatureBundle> train);
/// (x - mean) / std, or x - mean where std is 0.
FeatureBundle apply_norm(FeatureBundle bundle, const NormStats& stats);

// ---------------------------------------------------------------------------
// Feature files.

inline constexpr int kFeatureSchemaVersion = 1;

struct FeatureFile {
    std::size_t d_c = 0;
    std::size_t d_u = kUserDim;
    std::size_t d_e = kEditDim;
    std::vector<std::string> editors;
    std::uint64_t editor_hash = 0;
    Top12Mode top12 = Top12Mode::Additions;
    NormStats norm;
    std::vector<FeatureBundle> bundles;

    std::vector<FeatureBundle> select(SplitPart part) const;
    /// select() with the stored normalisation applied.
    std::vector<FeatureBundle> normalized(SplitPart part) const;
};

/// Featurizes every example of the split (raw values, tagged with their part)
/// and fits normalisation on the train part. Raises UnknownChangeset when an
/// example is not in the store.
FeatureFile build_feature_file(const ChangesetStore& store, const DatasetSplit& split, const FeatureConfig& config);

void write_features(const FeatureFile& file, std::ostream& out);
void save_features(const FeatureFile& file, const std::filesystem::path& path);
FeatureFile load_features(std::istream& in);
FeatureFile load_features(const std::filesystem::path& path);

} // namespace ovid
