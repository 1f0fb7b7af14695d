#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ovid/osm.hpp"
#include "ovid/store.hpp"

namespace ovid {

inline constexpr std::array<std::string_view, 12> kTop12Keys = {
    "building", "source",  "highway", "name",    "natural", "surface",
    "landuse",  "power",   "waterway", "amenity", "service", "oneway",
};

/// Index into kTop12Keys, or -1.
int top12_index(std::string_view key) noexcept;

/// Prior activity of one user as of a query time.
struct UserSnapshot {
    std::size_t past_creates = 0;
    std::size_t past_modifications = 0;
    std::size_t past_deletes = 0;
    std::size_t contributions = 0;
    /// Number of edits that added a top-12 key (one per key added).
    std::size_t top12_additions = 0;
    /// Distinct top-12 keys the user has added.
    std::size_t top12_distinct = 0;
    std::optional<Timestamp> account_created;
    std::size_t active_weeks = 0;
};

/// Activity of one user sorted by time so that any query is a handful of
/// binary searches. Every count only includes events strictly before `t`.
class UserHistory {
public:
    UserSnapshot at(Timestamp t) const;

private:
    friend class UserHistoryIndex;

    std::vector<Timestamp> creates_;
    std::vector<Timestamp> modifications_;
    std::vector<Timestamp> deletes_;
    std::vector<Timestamp> top12_additions_;
    std::array<std::optional<Timestamp>, 12> top12_first_{};
    /// Earliest changeset time within each distinct ISO week.
    std::vector<Timestamp> week_starts_;
    std::vector<Timestamp> changeset_times_;
    std::optional<Timestamp> registered_;
};

class UserHistoryIndex {
public:
    UserHistoryIndex() = default;

    /// Scans every changeset and edit in the store once. Tag additions are
    /// taken relative to the object's previous version in the history index.
    static UserHistoryIndex build(const ChangesetStore& store);

    /// Known account-creation times override the first-changeset proxy.
    void set_account_created(UserId user, Timestamp created);

    UserSnapshot at(UserId user, Timestamp t) const;

private:
    std::unordered_map<UserId, UserHistory> users_;
};

/// Keys present in `after` but not in `before`.
std::vector<std::string_view> added_keys(const Tags& before, const Tags& after);

} // namespace ovid
