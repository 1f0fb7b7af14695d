#include "ovid/ingest.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <string_view>

#include <expat.h>
#include <zlib.h>

#include "ovid/error.hpp"

namespace ovid {
namespace {

/// Byte stream over an istream that transparently inflates gzip input.
class ByteSource {
public:
    explicit ByteSource(std::istream& in) : in_(in) {
        in_.read(peek_.data(), 2);
        peeked_ = static_cast<std::size_t>(in_.gcount());
        gzip_ = peeked_ == 2 && static_cast<unsigned char>(peek_[0]) == 0x1f &&
                static_cast<unsigned char>(peek_[1]) == 0x8b;
        if (gzip_) {
            std::memset(&zs_, 0, sizeof zs_);
            if (inflateInit2(&zs_, 15 + 32) != Z_OK) {
                throw Error(ErrorCode::Io, "cannot initialise gzip decoder");
            }
        }
    }

    ByteSource(const ByteSource&) = delete;
    ByteSource& operator=(const ByteSource&) = delete;

    ~ByteSource() {
        if (gzip_) {
            inflateEnd(&zs_);
        }
    }

    /// Returns the number of bytes written to `out`; 0 at end of stream.
    std::size_t read(char* out, std::size_t capacity) {
        return gzip_ ? read_gzip(out, capacity) : read_raw(out, capacity);
    }

private:
    std::size_t read_raw(char* out, std::size_t capacity) {
        std::size_t n = 0;
        while (peek_pos_ < peeked_ && n < capacity) {
            out[n++] = peek_[peek_pos_++];
        }
        if (n < capacity) {
            in_.read(out + n, static_cast<std::streamsize>(capacity - n));
            n += static_cast<std::size_t>(in_.gcount());
        }
        return n;
    }

    std::size_t read_gzip(char* out, std::size_t capacity) {
        zs_.next_out = reinterpret_cast<Bytef*>(out);
        zs_.avail_out = static_cast<uInt>(capacity);
        while (zs_.avail_out == capacity && !finished_) {
            if (zs_.avail_in == 0) {
                const std::size_t got = read_raw(compressed_.data(), compressed_.size());
                if (got == 0) {
                    throw Error(ErrorCode::Io, "truncated gzip stream");
                }
                zs_.next_in = reinterpret_cast<Bytef*>(compressed_.data());
                zs_.avail_in = static_cast<uInt>(got);
            }
            const int rc = inflate(&zs_, Z_NO_FLUSH);
            if (rc == Z_STREAM_END) {
                finished_ = true;
            } else if (rc != Z_OK && rc != Z_BUF_ERROR) {
                throw Error(ErrorCode::Io, std::string("gzip decode error: ") + (zs_.msg ? zs_.msg : "unknown"));
            }
        }
        return capacity - zs_.avail_out;
    }

    std::istream& in_;
    std::array<char, 2> peek_{};
    std::size_t peeked_ = 0;
    std::size_t peek_pos_ = 0;
    bool gzip_ = false;
    bool finished_ = false;
    z_stream zs_{};
    std::array<char, 1 << 16> compressed_{};
};

/// Minimal RAII wrapper over an expat parser dispatching to a handler object
/// with start(name, attrs) and end(name) members.
template <typename Handler>
void run_expat(std::istream& in, Handler& handler) {
    XML_Parser parser = XML_ParserCreate("UTF-8");
    if (parser == nullptr) {
        throw Error(ErrorCode::Io, "cannot create XML parser");
    }
    struct Guard {
        XML_Parser p;
        ~Guard() { XML_ParserFree(p); }
    } guard{parser};

    XML_SetUserData(parser, &handler);
    XML_SetElementHandler(
        parser,
        [](void* data, const XML_Char* name, const XML_Char** attrs) {
            static_cast<Handler*>(data)->start(name, attrs);
        },
        [](void* data, const XML_Char* name) { static_cast<Handler*>(data)->end(name); });

    auto malformed = [&](const char* what) {
        return Error(ErrorCode::MalformedXml, std::string(what) + " at line " +
                                                  std::to_string(XML_GetCurrentLineNumber(parser)) + ", column " +
                                                  std::to_string(XML_GetCurrentColumnNumber(parser)));
    };

    ByteSource source(in);
    std::array<char, 1 << 16> buffer{};
    for (;;) {
        const std::size_t n = source.read(buffer.data(), buffer.size());
        const bool last = n == 0;
        if (XML_Parse(parser, buffer.data(), static_cast<int>(n), last ? 1 : 0) == XML_STATUS_ERROR) {
            throw malformed(XML_ErrorString(XML_GetErrorCode(parser)));
        }
        if (handler.failed) {
            throw malformed(handler.failure.c_str());
        }
        if (last) {
            break;
        }
    }
}

const char* find_attr(const XML_Char** attrs, std::string_view key) {
    for (std::size_t i = 0; attrs[i] != nullptr; i += 2) {
        if (key == attrs[i]) {
            return attrs[i + 1];
        }
    }
    return nullptr;
}

template <typename T>
std::optional<T> parse_number(const char* text) {
    if (text == nullptr) {
        return std::nullopt;
    }
    const std::string_view sv(text);
    T value{};
    auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value);
    if (ec != std::errc{} || ptr != sv.data() + sv.size()) {
        return std::nullopt;
    }
    return value;
}

template <typename T>
std::optional<T> attr_number(const XML_Char** attrs, std::string_view key) {
    return parse_number<T>(find_attr(attrs, key));
}

// ---------------------------------------------------------------------------

struct ChangesetHandler {
    const ChangesetSink& sink;
    ChangesetParseStats& stats;
    std::optional<Changeset> current;
    bool in_changeset = false;
    bool skip_current = false;
    std::size_t element_index = 0;
    bool failed = false;
    std::string failure;

    void start(const XML_Char* name, const XML_Char** attrs) {
        const std::string_view tag(name);
        if (tag == "changeset") {
            ++element_index;
            in_changeset = true;
            skip_current = false;
            const auto id = attr_number<ChangesetId>(attrs, "id");
            const auto uid = attr_number<UserId>(attrs, "uid");
            const char* created = find_attr(attrs, "created_at");
            const auto t = created ? parse_timestamp(created) : std::nullopt;
            if (!id || !uid || !t) {
                skip_current = true;
                ++stats.skipped;
                stats.warnings.push_back("changeset element #" + std::to_string(element_index) + " skipped: " +
                                         (!id ? "missing id" : !uid ? "missing uid" : "missing created_at"));
                return;
            }
            Changeset c;
            c.id = *id;
            c.user = *uid;
            c.t = *t;
            if (const char* user = find_attr(attrs, "user")) {
                c.username = user;
            }
            if (const char* closed = find_attr(attrs, "closed_at")) {
                c.closed_at = parse_timestamp(closed);
            }
            const auto min_lat = attr_number<double>(attrs, "min_lat");
            const auto min_lon = attr_number<double>(attrs, "min_lon");
            const auto max_lat = attr_number<double>(attrs, "max_lat");
            const auto max_lon = attr_number<double>(attrs, "max_lon");
            if (min_lat && min_lon && max_lat && max_lon) {
                c.bbox = BoundingBox{*min_lat, *min_lon, *max_lat, *max_lon};
            }
            current = std::move(c);
        } else if (tag == "tag" && in_changeset && !skip_current && current) {
            const char* k = find_attr(attrs, "k");
            const char* v = find_attr(attrs, "v");
            if (k == nullptr || v == nullptr) {
                return;
            }
            const std::string_view key(k);
            if (key == "comment") {
                current->comment = v;
            } else if (key == "created_by") {
                current->created_by = v;
            } else if (key == "imagery_used") {
                current->imagery_used = v;
            }
        }
    }

    void end(const XML_Char* name) {
        if (std::string_view(name) != "changeset") {
            return;
        }
        in_changeset = false;
        if (current) {
            ++stats.parsed;
            sink(std::move(*current));
            current.reset();
        }
    }
};

// ---------------------------------------------------------------------------

struct OscHandler {
    ChangesetStore& store;
    OscParseStats& stats;
    std::optional<EditOp> block;
    struct Pending {
        Edit edit;
        ChangesetId changeset = 0;
        UserId user = 0;
    };
    std::optional<Pending> current;
    bool failed = false;
    std::string failure;

    void fail(std::string message) {
        failed = true;
        failure = std::move(message);
    }

    void start(const XML_Char* name, const XML_Char** attrs) {
        if (failed) {
            return;
        }
        const std::string_view tag(name);
        if (const auto op = parse_edit_op(tag)) {
            block = op;
            return;
        }
        if (const auto type = parse_object_type(tag); type && block) {
            Pending p;
            p.edit.op = *block;
            p.edit.object.type = *type;
            const auto id = attr_number<std::uint64_t>(attrs, "id");
            const auto ver = attr_number<std::uint32_t>(attrs, "version");
            const auto changeset = attr_number<ChangesetId>(attrs, "changeset");
            const char* ts = find_attr(attrs, "timestamp");
            const auto t = ts ? parse_timestamp(ts) : std::nullopt;
            if (!id || !ver || !changeset || !t || *ver == 0) {
                fail(std::string(tag) + " element lacks a valid id, version, changeset or timestamp");
                return;
            }
            p.edit.object.id = *id;
            p.edit.ver = *ver;
            p.edit.t = *t;
            p.changeset = *changeset;
            p.user = attr_number<UserId>(attrs, "uid").value_or(0);
            if (*type == ObjectType::Node) {
                const auto lat = attr_number<double>(attrs, "lat");
                const auto lon = attr_number<double>(attrs, "lon");
                if (lat && lon) {
                    p.edit.object.loc.push_back(LatLon{*lat, *lon});
                }
            }
            current = std::move(p);
            return;
        }
        if (!current) {
            return;
        }
        auto& object = current->edit.object;
        if (tag == "tag") {
            const char* k = find_attr(attrs, "k");
            const char* v = find_attr(attrs, "v");
            if (k != nullptr && v != nullptr) {
                object.tags[k] = v;
            }
        } else if (tag == "nd") {
            if (const auto ref = attr_number<std::uint64_t>(attrs, "ref")) {
                object.refs.push_back(*ref);
            }
        } else if (tag == "member") {
            const char* type = find_attr(attrs, "type");
            const auto ref = attr_number<std::uint64_t>(attrs, "ref");
            if (type != nullptr && std::string_view(type) == "node" && ref) {
                object.refs.push_back(*ref);
            }
        }
    }

    void end(const XML_Char* name) {
        if (failed) {
            return;
        }
        const std::string_view tag(name);
        if (parse_edit_op(tag)) {
            block.reset();
            return;
        }
        if (!parse_object_type(tag) || !current) {
            return;
        }
        finish(std::move(*current));
        current.reset();
    }

    void finish(Pending p) {
        Edit& edit = p.edit;
        OsmObject& object = edit.object;
        const ObjectKey key = object_identity(object);

        if (object.type != ObjectType::Node) {
            for (auto ref : object.refs) {
                if (auto loc = store.node_location(ref)) {
                    object.loc.push_back(*loc);
                }
            }
        }

        VersionEntry entry;
        entry.ver = edit.ver;
        entry.changeset = p.changeset;
        entry.user = p.user;
        entry.t = edit.t;

        if (edit.op == EditOp::Delete) {
            // Deletion records carry no tags; join the prior state.
            entry.deleted = true;
            object.ver = edit.ver > 1 ? edit.ver - 1 : 1;
            if (const auto* prev = store.previous_version(key, edit.ver)) {
                object.tags = prev->tags;
                object.loc = prev->loc;
            } else {
                ++stats.deletes_without_history;
            }
            object.refs.clear();
        } else {
            object.ver = edit.ver;
            entry.loc = object.loc;
            entry.tags = object.tags;
        }

        store.record_version(key, std::move(entry));
        ++stats.edits;
        if (store.append_edit(p.changeset, p.user, std::move(edit))) {
            ++stats.attached;
        } else {
            ++stats.unknown_changeset;
            stats.warnings.push_back("edit of " + std::string(to_string(key.type)) + " " + std::to_string(key.id) +
                                     " references unknown changeset " + std::to_string(p.changeset));
        }
    }
};

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return in;
}

} // namespace

ChangesetParseStats parse_changeset_metadata(std::istream& in, const ChangesetSink& sink) {
    ChangesetParseStats stats;
    ChangesetHandler handler{sink, stats, std::nullopt};
    run_expat(in, handler);
    return stats;
}

ChangesetParseResult parse_changeset_metadata(std::istream& in) {
    ChangesetParseResult result;
    result.stats = parse_changeset_metadata(in, [&](Changeset&& c) { result.changesets.push_back(std::move(c)); });
    return result;
}

ChangesetParseResult parse_changeset_metadata(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_changeset_metadata(in);
}

OscParseStats parse_osc(std::istream& in, ChangesetStore& store) {
    OscParseStats stats;
    OscHandler handler{store, stats};
    run_expat(in, handler);
    return stats;
}

OscParseStats parse_osc(const std::filesystem::path& path, ChangesetStore& store) {
    auto in = open_input(path);
    return parse_osc(in, store);
}

IngestReport ingest_files(const std::filesystem::path& changesets, const std::vector<std::filesystem::path>& osc,
                          ChangesetStore& store) {
    IngestReport report;
    auto in = open_input(changesets);
    report.changesets = parse_changeset_metadata(in, [&](Changeset&& c) {
        if (!store.add_changeset(std::move(c))) {
            ++report.duplicates;
        }
    });
    for (const auto& path : osc) {
        report.osc.push_back(parse_osc(path, store));
    }
    report.resolved = store.resolve_parked();
    return report;
}

} // namespace ovid
