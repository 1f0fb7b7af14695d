#pragma once

// OSM domain model: objects, edits and changesets as immutable value records.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ovid {

/// UTC seconds since the Unix epoch.
using Timestamp = std::int64_t;
using ChangesetId = std::uint64_t;
using UserId = std::uint64_t;
using Tags = std::map<std::string, std::string>;

enum class ObjectType : std::uint8_t { Node = 0, Way = 1, Relation = 2 };
enum class EditOp : std::uint8_t { Create = 0, Modify = 1, Delete = 2 };

std::string_view to_string(ObjectType type) noexcept;
std::string_view to_string(EditOp op) noexcept;
std::optional<ObjectType> parse_object_type(std::string_view text) noexcept;
std::optional<EditOp> parse_edit_op(std::string_view text) noexcept;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const LatLon&, const LatLon&) = default;
};

bool is_valid_location(const LatLon& p) noexcept;

/// (id, type) is the identity of an OSM object; a way and a node may share an id.
struct ObjectKey {
    std::uint64_t id = 0;
    ObjectType type = ObjectType::Node;

    friend auto operator<=>(const ObjectKey&, const ObjectKey&) = default;
};

struct OsmObject {
    std::uint64_t id = 0;
    ObjectType type = ObjectType::Node;
    /// Node: at most one point. Way: resolved coordinates of its node refs.
    /// Relation: resolved coordinates of member nodes only.
    std::vector<LatLon> loc;
    /// Way node refs or relation node members, kept for the store round-trip.
    std::vector<std::uint64_t> refs;
    Tags tags;
    std::uint32_t ver = 1;

    friend bool operator==(const OsmObject&, const OsmObject&) = default;
};

ObjectKey object_identity(const OsmObject& o) noexcept;

/// For Create/Modify the object holds the state after the edit; for Delete it
/// holds the state before it (the prior version's tags and location).
struct Edit {
    OsmObject object;
    EditOp op = EditOp::Create;
    std::uint32_t ver = 1;
    Timestamp t = 0;

    friend bool operator==(const Edit&, const Edit&) = default;
};

/// Checks the op/version invariant: Create carries ver 1, Modify/Delete ver >= 2.
bool has_consistent_version(const Edit& e) noexcept;

struct BoundingBox {
    double min_lat = 0.0;
    double min_lon = 0.0;
    double max_lat = 0.0;
    double max_lon = 0.0;

    bool contains(const LatLon& p) const noexcept {
        return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Changeset {
    ChangesetId id = 0;
    std::vector<Edit> edits;
    /// created_at; user history queries are strict with respect to this.
    Timestamp t = 0;
    std::optional<Timestamp> closed_at;
    UserId user = 0;
    std::string username;
    std::string comment;
    std::optional<std::string> created_by;
    std::optional<std::string> imagery_used;
    std::optional<BoundingBox> bbox;

    friend bool operator==(const Changeset&, const Changeset&) = default;
};

/// Declared bbox when present; otherwise the envelope of every coordinate
/// reachable from the edits. nullopt when no coordinate exists.
std::optional<BoundingBox> bounding_box(const Changeset& c);

/// Envelope of the edit coordinates only, ignoring any declared bbox.
std::optional<BoundingBox> edit_envelope(const Changeset& c);

struct EditCounts {
    std::size_t creates = 0;
    std::size_t modifications = 0;
    std::size_t deletes = 0;

    std::size_t total() const noexcept { return creates + modifications + deletes; }
};

EditCounts count_edits(const Changeset& c) noexcept;

/// ISO-8601 "YYYY-MM-DDTHH:MM:SSZ" (the Z or a numeric offset is accepted).
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

/// ISO year * 100 + ISO week, e.g. 201501 for the first week of 2015.
int iso_week_key(Timestamp t);

} // namespace ovid
