#pragma once

// Ground-truth extraction from vandalism reverts.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "ovid/osm.hpp"
#include "ovid/store.hpp"

namespace ovid {

enum class Label : std::uint8_t { Regular = 0, Vandalism = 1 };

enum class ProvenanceKind : std::uint8_t {
    ExplicitMention,
    DeletionAttribution,
    NegativeSample,
    /// Label taken from an externally published dataset.
    Imported,
};

struct Provenance {
    ProvenanceKind kind = ProvenanceKind::NegativeSample;
    std::optional<ChangesetId> revert;
    std::optional<ObjectKey> object;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct LabeledExample {
    ChangesetId changeset = 0;
    Label label = Label::Regular;
    Provenance provenance;
    UserId user = 0;

    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Case-insensitive substring test for "vandalism".
bool mentions_vandalism(std::string_view comment);

/// Reverts in ascending changeset-id order.
std::vector<const Changeset*> find_vandalism_reverts(const ChangesetStore& store);

/// Integers listed after a "changeset"/"changesets" token, in comment order.
/// Separators between ids: whitespace , # : / and the word "and".
std::vector<ChangesetId> extract_changeset_ids(std::string_view comment);

/// Mentioned ids that exist in the store and were not authored by the reverter.
std::set<ChangesetId> attribute_explicit(const Changeset& revert, const ChangesetStore& store);

/// For every object the revert deletes: when all earlier versions, ignoring any
/// by the reverter, come from a single user, every changeset of that user on
/// the object. Maps each attributed changeset to the first object that implied it.
std::map<ChangesetId, ObjectKey> attribute_by_deletion_detailed(const Changeset& revert, const ChangesetStore& store);
std::set<ChangesetId> attribute_by_deletion(const Changeset& revert, const ChangesetStore& store);

/// n distinct changesets drawn uniformly without replacement from the store
/// minus `exclude` minus all vandalism reverts, labeled Regular, sorted by id.
std::vector<LabeledExample> sample_negatives(const ChangesetStore& store, const std::set<ChangesetId>& exclude,
                                             std::size_t n, std::uint64_t seed);

struct MineResult {
    /// Positives (ascending id) followed by the same number of negatives.
    std::vector<LabeledExample> examples;
    std::vector<ChangesetId> reverts;
    std::size_t explicit_positives = 0;
    std::size_t deletion_positives = 0;
};

/// Full extraction: reverts, attribution (explicit mention first, deletion only
/// when the revert names no usable id), then balanced negative sampling.
MineResult mine(const ChangesetStore& store, std::uint64_t seed);

enum class SplitPart : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

std::string_view to_string(SplitPart part) noexcept;
std::optional<SplitPart> parse_split_part(std::string_view text) noexcept;

struct SplitRatios {
    double train = 0.70;
    double validation = 0.10;
    double test = 0.20;

    std::array<double, 3> as_array() const { return {train, validation, test}; }
};

struct DatasetSplit {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> validation;
    std::vector<LabeledExample> test;
    SplitRatios ratios;
    std::uint64_t seed = 0;

    const std::vector<LabeledExample>& part(SplitPart p) const;
    std::vector<LabeledExample>& part(SplitPart p);
};

/// Users are shuffled by seed, then each is given whole to the split with the
/// largest deficit against its target example count (ties to the earlier split).
DatasetSplit split_user_disjoint(const std::vector<LabeledExample>& examples, SplitRatios ratios,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset files: header line with the manifest, then one record per example.

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetFile {
    std::vector<LabeledExample> examples;
    /// Parallel to examples when the file came from a split.
    std::vector<std::optional<SplitPart>> parts;
    std::optional<std::uint64_t> seed;
    std::optional<SplitRatios> ratios;
};

void save_dataset(const std::vector<LabeledExample>& examples, std::optional<std::uint64_t> seed,
                  const std::filesystem::path& path);
void save_split(const DatasetSplit& split, const std::filesystem::path& path);
void write_dataset(const DatasetFile& file, std::ostream& out);
DatasetFile load_dataset(std::istream& in);
DatasetFile load_dataset(const std::filesystem::path& path);
DatasetSplit to_split(const DatasetFile& file);

/// Reads "changeset_id,label[,user_id]" rows (label: 1/0, true/false or
/// vandalism/regular). Missing user ids are looked up in the store when given.
std::vector<LabeledExample> import_labels_csv(std::istream& in, const ChangesetStore* store);

} // namespace ovid
