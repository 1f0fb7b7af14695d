#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovid/osm.hpp"

namespace ovid {

/// One version of an object as recorded in the history index. Tags and loc
/// hold the state after that version; a deleted version has neither.
struct VersionEntry {
    std::uint32_t ver = 1;
    ChangesetId changeset = 0;
    UserId user = 0;
    Timestamp t = 0;
    bool deleted = false;
    std::vector<LatLon> loc;
    Tags tags;

    std::optional<std::string> name() const;

    friend bool operator==(const VersionEntry&, const VersionEntry&) = default;
};

/// An edit whose changeset was not (yet) in the store.
struct ParkedEdit {
    ChangesetId changeset = 0;
    UserId user = 0;
    Edit edit;

    friend bool operator==(const ParkedEdit&, const ParkedEdit&) = default;
};

using VersionHistory = std::vector<VersionEntry>;

/// Append-only changeset collection plus the per-object version index.
/// Filled by a single writer during ingest; read-only afterwards.
class ChangesetStore {
public:
    /// Returns false (and leaves the store unchanged) when the id already exists.
    bool add_changeset(Changeset changeset);

    const Changeset* find(ChangesetId id) const;
    bool contains(ChangesetId id) const { return find(id) != nullptr; }
    std::span<const Changeset> changesets() const { return changesets_; }
    std::size_t size() const { return changesets_.size(); }

    /// Appends to the changeset's edit list; parks the edit when the id is unknown.
    /// Returns true when attached.
    bool append_edit(ChangesetId id, UserId user, Edit edit);

    /// Re-attaches parked edits whose changesets have since been added.
    std::size_t resolve_parked();
    std::span<const ParkedEdit> parked() const { return parked_; }

    /// Inserts keeping entries sorted by ver; an existing entry with the same
    /// ver is replaced.
    void record_version(const ObjectKey& key, VersionEntry entry);

    const VersionHistory* history(const ObjectKey& key) const;
    /// Greatest-version entry with ver < `ver`, if any.
    const VersionEntry* previous_version(const ObjectKey& key, std::uint32_t ver) const;
    /// Location of the latest non-deleted version of a node.
    std::optional<LatLon> node_location(std::uint64_t node_id) const;
    const std::map<ObjectKey, VersionHistory>& histories() const { return histories_; }

    friend bool operator==(const ChangesetStore& a, const ChangesetStore& b) {
        return a.changesets_ == b.changesets_ && a.histories_ == b.histories_ && a.parked_ == b.parked_;
    }

private:
    std::vector<Changeset> changesets_;
    std::unordered_map<ChangesetId, std::size_t> by_id_;
    std::map<ObjectKey, VersionHistory> histories_;
    std::vector<ParkedEdit> parked_;
};

inline constexpr int kStoreSchemaVersion = 1;

void save_store(const ChangesetStore& store, std::ostream& out);
void save_store(const ChangesetStore& store, const std::filesystem::path& path);
ChangesetStore load_store(std::istream& in);
ChangesetStore load_store(const std::filesystem::path& path);

} // namespace ovid
