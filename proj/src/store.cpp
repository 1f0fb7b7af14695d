#include "ovid/store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "ovid/error.hpp"

namespace ovid {

using nlohmann::json;

std::optional<std::string> VersionEntry::name() const {
    if (auto it = tags.find("name"); it != tags.end()) {
        return it->second;
    }
    return std::nullopt;
}

bool ChangesetStore::add_changeset(Changeset changeset) {
    if (by_id_.contains(changeset.id)) {
        return false;
    }
    by_id_.emplace(changeset.id, changesets_.size());
    changesets_.push_back(std::move(changeset));
    return true;
}

const Changeset* ChangesetStore::find(ChangesetId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &changesets_[it->second];
}

bool ChangesetStore::append_edit(ChangesetId id, UserId user, Edit edit) {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) {
        parked_.push_back(ParkedEdit{id, user, std::move(edit)});
        return false;
    }
    changesets_[it->second].edits.push_back(std::move(edit));
    return true;
}

std::size_t ChangesetStore::resolve_parked() {
    std::size_t attached = 0;
    std::vector<ParkedEdit> still_parked;
    for (auto& p : parked_) {
        auto it = by_id_.find(p.changeset);
        if (it == by_id_.end()) {
            still_parked.push_back(std::move(p));
        } else {
            changesets_[it->second].edits.push_back(std::move(p.edit));
            ++attached;
        }
    }
    parked_ = std::move(still_parked);
    return attached;
}

void ChangesetStore::record_version(const ObjectKey& key, VersionEntry entry) {
    auto& versions = histories_[key];
    auto it = std::lower_bound(versions.begin(), versions.end(), entry.ver,
                               [](const VersionEntry& v, std::uint32_t ver) { return v.ver < ver; });
    if (it != versions.end() && it->ver == entry.ver) {
        *it = std::move(entry);
    } else {
        versions.insert(it, std::move(entry));
    }
}

const VersionHistory* ChangesetStore::history(const ObjectKey& key) const {
    auto it = histories_.find(key);
    return it == histories_.end() ? nullptr : &it->second;
}

const VersionEntry* ChangesetStore::previous_version(const ObjectKey& key, std::uint32_t ver) const {
    const auto* versions = history(key);
    if (versions == nullptr) {
        return nullptr;
    }
    auto it = std::lower_bound(versions->begin(), versions->end(), ver,
                               [](const VersionEntry& v, std::uint32_t x) { return v.ver < x; });
    if (it == versions->begin()) {
        return nullptr;
    }
    return &*std::prev(it);
}

std::optional<LatLon> ChangesetStore::node_location(std::uint64_t node_id) const {
    const auto* versions = history(ObjectKey{node_id, ObjectType::Node});
    if (versions == nullptr) {
        return std::nullopt;
    }
    for (auto it = versions->rbegin(); it != versions->rend(); ++it) {
        if (!it->deleted && !it->loc.empty()) {
            return it->loc.front();
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON encoding.

namespace {

json encode_loc(const std::vector<LatLon>& loc) {
    json arr = json::array();
    for (const auto& p : loc) {
        arr.push_back(json::array({p.lat, p.lon}));
    }
    return arr;
}

std::vector<LatLon> decode_loc(const json& j) {
    std::vector<LatLon> loc;
    for (const auto& p : j) {
        loc.push_back(LatLon{p.at(0).get<double>(), p.at(1).get<double>()});
    }
    return loc;
}

json encode_edit(const Edit& e) {
    return json{{"op", to_string(e.op)},
                {"ver", e.ver},
                {"t", e.t},
                {"type", to_string(e.object.type)},
                {"id", e.object.id},
                {"object_ver", e.object.ver},
                {"loc", encode_loc(e.object.loc)},
                {"refs", e.object.refs},
                {"tags", e.object.tags}};
}

Edit decode_edit(const json& j) {
    Edit e;
    const auto op = parse_edit_op(j.at("op").get<std::string>());
    const auto type = parse_object_type(j.at("type").get<std::string>());
    if (!op || !type) {
        throw Error(ErrorCode::Io, "unknown edit op or object type");
    }
    e.op = *op;
    e.ver = j.at("ver").get<std::uint32_t>();
    e.t = j.at("t").get<Timestamp>();
    e.object.type = *type;
    e.object.id = j.at("id").get<std::uint64_t>();
    e.object.ver = j.at("object_ver").get<std::uint32_t>();
    e.object.loc = decode_loc(j.at("loc"));
    e.object.refs = j.at("refs").get<std::vector<std::uint64_t>>();
    e.object.tags = j.at("tags").get<Tags>();
    return e;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json encode_changeset(const Changeset& c) {
    json edits = json::array();
    for (const auto& e : c.edits) {
        edits.push_back(encode_edit(e));
    }
    json bbox = nullptr;
    if (c.bbox) {
        bbox = json::array({c.bbox->min_lat, c.bbox->min_lon, c.bbox->max_lat, c.bbox->max_lon});
    }
    return json{{"kind", "changeset"},
                {"id", c.id},
                {"t", c.t},
                {"closed_at", optional_json(c.closed_at)},
                {"uid", c.user},
                {"user", c.username},
                {"comment", c.comment},
                {"created_by", optional_json(c.created_by)},
                {"imagery_used", optional_json(c.imagery_used)},
                {"bbox", bbox},
                {"edits", edits}};
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) {
        return std::nullopt;
    }
    return v.get<T>();
}

Changeset decode_changeset(const json& j) {
    Changeset c;
    c.id = j.at("id").get<ChangesetId>();
    c.t = j.at("t").get<Timestamp>();
    c.closed_at = optional_field<Timestamp>(j, "closed_at");
    c.user = j.at("uid").get<UserId>();
    c.username = j.at("user").get<std::string>();
    c.comment = j.at("comment").get<std::string>();
    c.created_by = optional_field<std::string>(j, "created_by");
    c.imagery_used = optional_field<std::string>(j, "imagery_used");
    if (const auto& b = j.at("bbox"); !b.is_null()) {
        c.bbox = BoundingBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                             b.at(3).get<double>()};
    }
    for (const auto& e : j.at("edits")) {
        c.edits.push_back(decode_edit(e));
    }
    return c;
}

json encode_history(const ObjectKey& key, const VersionHistory& versions) {
    json arr = json::array();
    for (const auto& v : versions) {
        arr.push_back(json{{"ver", v.ver},
                           {"changeset", v.changeset},
                           {"uid", v.user},
                           {"t", v.t},
                           {"deleted", v.deleted},
                           {"loc", encode_loc(v.loc)},
                           {"tags", v.tags}});
    }
    return json{{"kind", "history"}, {"type", to_string(key.type)}, {"id", key.id}, {"versions", arr}};
}

} // namespace

void save_store(const ChangesetStore& store, std::ostream& out) {
    out << json{{"schema", "ovid-store"}, {"version", kStoreSchemaVersion}}.dump() << '\n';
    std::size_t records = 0;
    for (const auto& c : store.changesets()) {
        out << encode_changeset(c).dump() << '\n';
        ++records;
    }
    for (const auto& [key, versions] : store.histories()) {
        out << encode_history(key, versions).dump() << '\n';
        ++records;
    }
    for (const auto& p : store.parked()) {
        out << json{{"kind", "parked"}, {"changeset", p.changeset}, {"uid", p.user}, {"edit", encode_edit(p.edit)}}
                   .dump()
            << '\n';
        ++records;
    }
    out << json{{"kind", "end"}, {"records", records}}.dump() << '\n';
    if (!out) {
        throw Error(ErrorCode::Io, "write failed");
    }
}

void save_store(const ChangesetStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    save_store(store, out);
}

ChangesetStore load_store(std::istream& in) {
    std::string line;
    std::size_t offset = 0;
    std::size_t line_no = 0;
    auto io_error = [&](const std::string& what) {
        return Error(ErrorCode::Io,
                     what + " at record " + std::to_string(line_no) + " (byte offset " + std::to_string(offset) + ")");
    };

    if (!std::getline(in, line)) {
        throw io_error("missing header");
    }
    ++line_no;
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception&) {
        throw io_error("unreadable header");
    }
    if (header.value("schema", "") != "ovid-store") {
        throw io_error("not an ovid store");
    }
    if (header.value("version", -1) != kStoreSchemaVersion) {
        throw Error(ErrorCode::SchemaVersionMismatch, "store schema version " + header.at("version").dump() +
                                                          ", expected " + std::to_string(kStoreSchemaVersion));
    }
    offset += line.size() + 1;

    ChangesetStore store;
    std::size_t records = 0;
    bool ended = false;
    while (std::getline(in, line)) {
        ++line_no;
        const bool terminated = !in.eof();
        if (ended) {
            throw io_error("data after end record");
        }
        if (!terminated) {
            throw io_error("truncated record");
        }
        try {
            const json j = json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "changeset") {
                if (!store.add_changeset(decode_changeset(j))) {
                    throw io_error("duplicate changeset id");
                }
            } else if (kind == "history") {
                const auto type = parse_object_type(j.at("type").get<std::string>());
                if (!type) {
                    throw io_error("unknown object type");
                }
                const ObjectKey key{j.at("id").get<std::uint64_t>(), *type};
                for (const auto& v : j.at("versions")) {
                    VersionEntry entry;
                    entry.ver = v.at("ver").get<std::uint32_t>();
                    entry.changeset = v.at("changeset").get<ChangesetId>();
                    entry.user = v.at("uid").get<UserId>();
                    entry.t = v.at("t").get<Timestamp>();
                    entry.deleted = v.at("deleted").get<bool>();
                    entry.loc = decode_loc(v.at("loc"));
                    entry.tags = v.at("tags").get<Tags>();
                    store.record_version(key, std::move(entry));
                }
            } else if (kind == "parked") {
                store.append_edit(j.at("changeset").get<ChangesetId>(), j.at("uid").get<UserId>(),
                                  decode_edit(j.at("edit")));
            } else if (kind == "end") {
                if (j.at("records").get<std::size_t>() != records) {
                    throw io_error("record count mismatch");
                }
                ended = true;
                offset += line.size() + 1;
                continue;
            } else {
                throw io_error("unknown record kind '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw io_error(std::string("invalid record (") + e.what() + ")");
        }
        ++records;
        offset += line.size() + 1;
    }
    if (!ended) {
        throw io_error("truncated store (no end record)");
    }
    return store;
}

ChangesetStore load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return load_store(in);
}

} // namespace ovid
