#include "ovid/osm.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>

namespace ovid {

std::string_view to_string(ObjectType type) noexcept {
    switch (type) {
    case ObjectType::Node: return "node";
    case ObjectType::Way: return "way";
    case ObjectType::Relation: return "relation";
    }
    return "node";
}

std::string_view to_string(EditOp op) noexcept {
    switch (op) {
    case EditOp::Create: return "create";
    case EditOp::Modify: return "modify";
    case EditOp::Delete: return "delete";
    }
    return "create";
}

std::optional<ObjectType> parse_object_type(std::string_view text) noexcept {
    if (text == "node") return ObjectType::Node;
    if (text == "way") return ObjectType::Way;
    if (text == "relation") return ObjectType::Relation;
    return std::nullopt;
}

std::optional<EditOp> parse_edit_op(std::string_view text) noexcept {
    if (text == "create") return EditOp::Create;
    if (text == "modify") return EditOp::Modify;
    if (text == "delete") return EditOp::Delete;
    return std::nullopt;
}

bool is_valid_location(const LatLon& p) noexcept {
    return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

ObjectKey object_identity(const OsmObject& o) noexcept {
    return ObjectKey{o.id, o.type};
}

bool has_consistent_version(const Edit& e) noexcept {
    if (e.op == EditOp::Create) {
        return e.ver == 1;
    }
    return e.ver >= 2;
}

std::optional<BoundingBox> edit_envelope(const Changeset& c) {
    std::optional<BoundingBox> box;
    for (const auto& edit : c.edits) {
        for (const auto& p : edit.object.loc) {
            if (!box) {
                box = BoundingBox{p.lat, p.lon, p.lat, p.lon};
                continue;
            }
            box->min_lat = std::min(box->min_lat, p.lat);
            box->min_lon = std::min(box->min_lon, p.lon);
            box->max_lat = std::max(box->max_lat, p.lat);
            box->max_lon = std::max(box->max_lon, p.lon);
        }
    }
    return box;
}

std::optional<BoundingBox> bounding_box(const Changeset& c) {
    if (c.bbox) {
        return c.bbox;
    }
    return edit_envelope(c);
}

EditCounts count_edits(const Changeset& c) noexcept {
    EditCounts counts;
    for (const auto& edit : c.edits) {
        switch (edit.op) {
        case EditOp::Create: ++counts.creates; break;
        case EditOp::Modify: ++counts.modifications; break;
        case EditOp::Delete: ++counts.deletes; break;
        }
    }
    return counts;
}

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) {
        return false;
    }
    const char* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc{} && ptr == first + len;
}

} // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
        text[13] != ':' || text[16] != ':') {
        return std::nullopt;
    }
    if (!read_int(text, 0, 4, year) || !read_int(text, 5, 2, month) || !read_int(text, 8, 2, day) ||
        !read_int(text, 11, 2, hour) || !read_int(text, 14, 2, minute) || !read_int(text, 17, 2, second)) {
        return std::nullopt;
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) {
        return std::nullopt;
    }
    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            ++pos;
        }
    }
    Timestamp offset = 0;
    const std::string_view zone = text.substr(pos);
    if (zone == "Z" || zone.empty()) {
        offset = 0;
    } else if (zone.size() == 6 && (zone[0] == '+' || zone[0] == '-') && zone[3] == ':') {
        int oh = 0, om = 0;
        if (!read_int(zone, 1, 2, oh) || !read_int(zone, 4, 2, om)) {
            return std::nullopt;
        }
        offset = (zone[0] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    } else {
        return std::nullopt;
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<Timestamp>(days) * 86400 + hour * 3600 + minute * 60 + second - offset;
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day_count = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    const auto secs = t - day_count * 86400;
    const year_month_day ymd{sys_days{days{day_count}}};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                  static_cast<long long>(secs % 60));
    return buf;
}

int iso_week_key(Timestamp t) {
    using namespace std::chrono;
    const auto day_count = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    const sys_days day{days{day_count}};
    // ISO weeks belong to the year containing their Thursday.
    const auto iso_weekday = weekday{day}.iso_encoding(); // Mon=1 .. Sun=7
    const sys_days thursday = day + days{4 - static_cast<int>(iso_weekday)};
    const year_month_day thursday_ymd{thursday};
    const sys_days jan1{thursday_ymd.year() / January / 1};
    const int week = static_cast<int>((thursday - jan1).count() / 7) + 1;
    return static_cast<int>(thursday_ymd.year()) * 100 + week;
}

} // namespace ovid
