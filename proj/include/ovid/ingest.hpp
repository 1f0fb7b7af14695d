#pragma once

// Streaming readers for the OSM changeset-dump and osmChange XML dialects.
// Both accept plain or gzip-compressed input (detected from the magic bytes).

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ovid/osm.hpp"
#include "ovid/store.hpp"

namespace ovid {

struct ChangesetParseStats {
    std::size_t parsed = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

using ChangesetSink = std::function<void(Changeset&&)>;

/// Emits one Changeset (without edits) per <changeset> element. Elements with a
/// missing or unparseable id, uid or created_at are skipped and counted.
/// Throws Error{MalformedXml} with line/column on broken XML.
ChangesetParseStats parse_changeset_metadata(std::istream& in, const ChangesetSink& sink);

struct ChangesetParseResult {
    std::vector<Changeset> changesets;
    ChangesetParseStats stats;
};

ChangesetParseResult parse_changeset_metadata(std::istream& in);
ChangesetParseResult parse_changeset_metadata(const std::filesystem::path& path);

struct OscParseStats {
    std::size_t edits = 0;
    std::size_t attached = 0;
    /// Edits whose changeset id is absent from the store; kept in store.parked().
    std::size_t unknown_changeset = 0;
    /// Delete edits with no earlier version to join tags from.
    std::size_t deletes_without_history = 0;
    std::vector<std::string> warnings;
};

/// Turns every node/way/relation inside <create>/<modify>/<delete> into an
/// Edit, appends it to its changeset and records the version in the history
/// index. Delete edits carry the tags and location of the previous version.
OscParseStats parse_osc(std::istream& in, ChangesetStore& store);
OscParseStats parse_osc(const std::filesystem::path& path, ChangesetStore& store);

struct IngestReport {
    ChangesetParseStats changesets;
    std::size_t duplicates = 0;
    std::vector<OscParseStats> osc;
    /// Parked edits attached after all inputs were read.
    std::size_t resolved = 0;
};

/// Changeset dump first, then each osmChange file in order.
IngestReport ingest_files(const std::filesystem::path& changesets, const std::vector<std::filesystem::path>& osc,
                          ChangesetStore& store);

} // namespace ovid
