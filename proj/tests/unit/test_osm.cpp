#include <chrono>

#include "doctest.h"
#include "ovid/osm.hpp"
#include "ovid/rng.hpp"

using namespace ovid;

namespace {

Edit node_edit(std::uint64_t id, EditOp op, std::uint32_t ver, double lat, double lon) {
    Edit e;
    e.object.id = id;
    e.object.type = ObjectType::Node;
    e.object.loc = {{lat, lon}};
    e.object.ver = ver;
    e.op = op;
    e.ver = ver;
    return e;
}

// ISO week through the calendar library: the week of the Thursday in it.
int iso_week_oracle(Timestamp t) {
    using namespace std::chrono;
    const sys_days day = floor<days>(sys_seconds{seconds{t}});
    const int from_monday = (weekday{day}.c_encoding() + 6) % 7;
    const sys_days thursday = day - days{from_monday} + days{3};
    const year_month_day ymd{thursday};
    const sys_days jan1 = sys_days{ymd.year() / January / 1};
    const int week = static_cast<int>((thursday - jan1).count() / 7) + 1;
    return static_cast<int>(ymd.year()) * 100 + week;
}

} // namespace

TEST_SUITE("osm") {

TEST_CASE("timestamps parse in UTC") {
    CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_timestamp("2015-01-01T00:00:00Z") == 1420070400);
    CHECK(parse_timestamp("2015-01-01T01:00:00+01:00") == 1420070400);
    CHECK(parse_timestamp("2014-12-31T19:30:00-04:30") == 1420070400);
    CHECK(parse_timestamp("2016-02-29T12:00:00Z") == 1456747200);
    CHECK_FALSE(parse_timestamp("2015-02-30T00:00:00Z"));
    CHECK_FALSE(parse_timestamp("yesterday"));
    CHECK(format_timestamp(1420070400) == "2015-01-01T00:00:00Z");
}

TEST_CASE("timestamp formatting round-trips") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const Timestamp t = static_cast<Timestamp>(uniform_index(rng, 4102444800ULL));
        CHECK(parse_timestamp(format_timestamp(t)) == t);
    }
}

TEST_CASE("iso week keys") {
    CHECK(iso_week_key(*parse_timestamp("2015-01-01T00:00:00Z")) == 201501);
    CHECK(iso_week_key(*parse_timestamp("2021-01-03T23:59:59Z")) == 202053);
    CHECK(iso_week_key(*parse_timestamp("2018-12-31T00:00:00Z")) == 201901);
    Rng rng(2);
    for (int i = 0; i < 5000; ++i) {
        const Timestamp t = static_cast<Timestamp>(uniform_index(rng, 4102444800ULL));
        CHECK(iso_week_key(t) == iso_week_oracle(t));
    }
}

TEST_CASE("enum names round-trip") {
    for (auto t : {ObjectType::Node, ObjectType::Way, ObjectType::Relation}) {
        CHECK(parse_object_type(to_string(t)) == t);
    }
    for (auto op : {EditOp::Create, EditOp::Modify, EditOp::Delete}) {
        CHECK(parse_edit_op(to_string(op)) == op);
    }
    CHECK_FALSE(parse_object_type("area"));
    CHECK_FALSE(parse_edit_op("rename"));
}

TEST_CASE("object identity is id plus type") {
    OsmObject a, b;
    a.id = b.id = 7;
    a.type = ObjectType::Node;
    b.type = ObjectType::Way;
    CHECK(object_identity(a) != object_identity(b));
    b.type = ObjectType::Node;
    b.tags["x"] = "y";
    CHECK(object_identity(a) == object_identity(b));
}

TEST_CASE("edit version consistency") {
    CHECK(has_consistent_version(node_edit(1, EditOp::Create, 1, 0, 0)));
    CHECK_FALSE(has_consistent_version(node_edit(1, EditOp::Create, 2, 0, 0)));
    CHECK(has_consistent_version(node_edit(1, EditOp::Modify, 2, 0, 0)));
    CHECK_FALSE(has_consistent_version(node_edit(1, EditOp::Modify, 1, 0, 0)));
    CHECK_FALSE(has_consistent_version(node_edit(1, EditOp::Delete, 1, 0, 0)));
}

TEST_CASE("locations") {
    CHECK(is_valid_location({90, 180}));
    CHECK(is_valid_location({-90, -180}));
    CHECK_FALSE(is_valid_location({90.5, 0}));
    CHECK_FALSE(is_valid_location({0, -181}));
}

TEST_CASE("edit counts and bounding boxes") {
    Changeset c;
    c.edits = {node_edit(1, EditOp::Create, 1, 10, 20), node_edit(2, EditOp::Modify, 3, -5, 25),
               node_edit(3, EditOp::Delete, 2, 0, 30), node_edit(4, EditOp::Create, 1, 2, 21)};
    const auto n = count_edits(c);
    CHECK(n.creates == 2);
    CHECK(n.modifications == 1);
    CHECK(n.deletes == 1);
    CHECK(n.total() == 4);

    const auto env = edit_envelope(c);
    REQUIRE(env);
    CHECK(*env == BoundingBox{-5, 20, 10, 30});
    CHECK(bounding_box(c) == env);
    c.bbox = BoundingBox{1, 2, 3, 4};
    CHECK(bounding_box(c) == c.bbox);
    CHECK(edit_envelope(c) == env);
    CHECK(env->contains({0, 25}));
    CHECK_FALSE(env->contains({11, 25}));

    Changeset empty;
    CHECK_FALSE(bounding_box(empty));
}

} // TEST_SUITE
