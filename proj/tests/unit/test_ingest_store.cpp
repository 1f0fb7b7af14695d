#include <sstream>

#include "doctest.h"
#include "ovid/error.hpp"
#include "testkit.hpp"

using namespace ovid;
using namespace ovid::testkit;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::InvalidArgument;
}

std::string saved(const ChangesetStore& s) {
    std::ostringstream out;
    save_store(s, out);
    return out.str();
}

ChangesetStore loaded(const std::string& bytes) {
    std::istringstream in(bytes);
    return load_store(in);
}

ChangesetStore small_store(bool gz = false) {
    const auto dir = data_dir() / "small";
    ChangesetStore store;
    ingest_files(dir / (gz ? "changesets.osm.gz" : "changesets.osm"), {dir / (gz ? "edits.osc.gz" : "edits.osc")},
                 store);
    return store;
}

} // namespace

TEST_SUITE("ingest_store") {

TEST_CASE("changeset dump: records without a uid are skipped") {
    const auto expected = read_json(data_dir() / "small" / "expected.json");
    const auto r = parse_changeset_metadata(data_dir() / "small" / "changesets.osm");
    CHECK(r.changesets.size() == expected.at("changesets").get<std::size_t>());
    CHECK(r.stats.skipped == expected.at("skipped").get<std::size_t>());
    const auto& first = r.changesets.front();
    CHECK(first.id == 40001);
    CHECK(first.edits.empty());
}

TEST_CASE("changeset metadata fields") {
    std::istringstream in(R"(<osm>
  <changeset id="9" created_at="2020-05-01T10:00:00Z" closed_at="2020-05-01T10:05:00Z" user="a" uid="3"
             min_lat="1.5" min_lon="2.5" max_lat="3.5" max_lon="4.5" comment_count="0">
    <tag k="comment" v="fix &amp; tidy"/>
    <tag k="created_by" v="iD 2.20"/>
    <tag k="imagery_used" v="Bing"/>
  </changeset>
  <changeset id="10" created_at="2020-05-01T11:00:00Z" uid="4"/>
  <changeset id="x" created_at="2020-05-01T11:00:00Z" uid="4"/>
  <changeset id="11" created_at="not a time" uid="4"/>
</osm>)");
    const auto r = parse_changeset_metadata(in);
    REQUIRE(r.changesets.size() == 2);
    const auto& c = r.changesets[0];
    CHECK(c.id == 9);
    CHECK(c.user == 3);
    CHECK(c.username == "a");
    CHECK(c.t == *parse_timestamp("2020-05-01T10:00:00Z"));
    CHECK(c.closed_at == parse_timestamp("2020-05-01T10:05:00Z"));
    CHECK(c.comment == "fix & tidy");
    CHECK(c.created_by == "iD 2.20");
    CHECK(c.imagery_used == "Bing");
    CHECK(c.bbox == BoundingBox{1.5, 2.5, 3.5, 4.5});
    CHECK_FALSE(r.changesets[1].bbox);
    CHECK_FALSE(r.changesets[1].created_by);
    CHECK(r.stats.skipped == 2);
}

TEST_CASE("gzip input equals plain input") {
    const auto plain = small_store();
    CHECK(plain == small_store(true));
    const auto expected = read_json(data_dir() / "small" / "expected.json");
    std::size_t edits = 0;
    for (const auto& c : plain.changesets()) {
        edits += c.edits.size();
    }
    CHECK(edits == expected.at("edits").get<std::size_t>());
}

TEST_CASE("broken xml raises MalformedXml") {
    ChangesetStore store;
    CHECK(code_of([&] { parse_osc(data_dir() / "small" / "broken.osc", store); }) == ErrorCode::MalformedXml);
    std::istringstream bad("<osm><changeset id=\"1\"");
    CHECK(code_of([&] { parse_changeset_metadata(bad); }) == ErrorCode::MalformedXml);
    CHECK(code_of([&] { parse_osc(data_dir() / "small" / "absent.osc", store); }) == ErrorCode::Io);
}

TEST_CASE("osc edits: way coordinates, modify history and delete tags") {
    const auto store = small_store();
    const auto* c2 = store.find(40002);
    REQUIRE(c2);
    const auto& way = c2->edits.at(1);
    CHECK(way.object.type == ObjectType::Way);
    CHECK(way.object.refs == std::vector<std::uint64_t>{1000, 1002});
    CHECK(way.object.loc.size() == 2);
    CHECK(way.object.tags.at("name") == "Ringstraße");

    const auto* h = store.history({1001, ObjectType::Node});
    REQUIRE(h);
    CHECK(h->size() == 3);
    CHECK(h->at(1).tags.at("name") == "POOP");
    CHECK(store.previous_version({1001, ObjectType::Node}, 3)->ver == 2);
    CHECK(store.previous_version({1001, ObjectType::Node}, 1) == nullptr);

    const auto* c5 = store.find(40005);
    REQUIRE(c5);
    for (const auto& e : c5->edits) {
        CHECK(e.op == EditOp::Delete);
    }
    const auto& way_delete = c5->edits.at(0);
    CHECK(way_delete.object.tags == Tags{{"highway", "residential"}, {"name", "Ringstraße"}});
    const auto& node_delete = c5->edits.at(1);
    CHECK(node_delete.object.tags == Tags{{"amenity", "bench"}});
    CHECK(store.history({5000, ObjectType::Way})->back().deleted);
}

TEST_CASE("fixture delete edits carry the prior-version tags") {
    const auto store = fixture_store();
    const auto expected = fixture_expected();
    CHECK(store.size() == expected.at("changesets").get<std::size_t>());
    const auto err = check_ingest_roundtrip();
    INFO(err);
    CHECK(err.empty());
    CHECK(expected.at("deletes").size() > 10);
}

TEST_CASE("edits for unknown changesets are parked") {
    const auto store = fixture_store();
    CHECK(store.parked().size() == fixture_expected().at("parked_edits").get<std::size_t>());
    CHECK(store.parked().front().changeset == 77777777);

    // Edits read before their changeset are attached once it arrives.
    ChangesetStore late;
    parse_osc(data_dir() / "small" / "edits.osc", late);
    CHECK(late.parked().size() == 8);
    for (auto& c : parse_changeset_metadata(data_dir() / "small" / "changesets.osm").changesets) {
        late.add_changeset(std::move(c));
    }
    CHECK(late.resolve_parked() == 8);
    CHECK(late.parked().empty());
    CHECK(late.find(40001)->edits.size() == 2);
}

TEST_CASE("duplicate changeset ids are refused") {
    ChangesetStore s;
    Changeset c;
    c.id = 5;
    CHECK(s.add_changeset(c));
    c.comment = "other";
    CHECK_FALSE(s.add_changeset(c));
    CHECK(s.find(5)->comment.empty());
}

TEST_CASE("store round-trip is byte-identical") {
    const auto store = fixture_store();
    const auto bytes = saved(store);
    const auto back = loaded(bytes);
    CHECK(back == store);
    CHECK(saved(back) == bytes);
    CHECK(back.size() == store.size());
    CHECK(back.parked().size() == store.parked().size());

    const auto path = std::filesystem::temp_directory_path() / "ovid_unit_store.jsonl";
    save_store(store, path);
    CHECK(load_store(path) == store);
    std::filesystem::remove(path);
}

TEST_CASE("truncated or foreign stores are refused") {
    const auto bytes = saved(small_store());
    CHECK(code_of([&] { loaded(bytes.substr(0, bytes.size() - 20)); }) == ErrorCode::Io);
    CHECK(code_of([&] { loaded(bytes.substr(0, bytes.find('\n') + 1)); }) == ErrorCode::Io);
    CHECK(code_of([&] { loaded(""); }) == ErrorCode::Io);
    CHECK(code_of([&] { loaded("{\"schema\":\"something-else\",\"version\":1}\n"); }) == ErrorCode::Io);

    auto bumped = bytes;
    const auto at = bumped.find("\"version\":1");
    REQUIRE(at < bumped.find('\n'));
    bumped.replace(at, 11, "\"version\":2");
    CHECK(code_of([&] { loaded(bumped); }) == ErrorCode::SchemaVersionMismatch);
}

} // TEST_SUITE
