#include <map>
#include <set>

#include "doctest.h"
#include "ovid/rng.hpp"
#include "ovid/user_history.hpp"

using namespace ovid;

namespace {

const char* kKeys[] = {"building", "name", "shop", "highway", "note", "amenity", "fixme", "oneway"};

struct Generated {
    ChangesetStore store;
    // Per object: tags by version, for the oracle.
    std::map<std::uint64_t, std::map<std::uint32_t, Tags>> versions;
};

Generated random_history(std::uint64_t seed) {
    Rng rng(seed);
    Generated g;
    std::map<std::uint64_t, std::uint32_t> latest;
    std::set<std::uint64_t> deleted;
    Timestamp t = 1500000000;
    for (ChangesetId id = 1; id <= 60; ++id) {
        t += static_cast<Timestamp>(uniform_index(rng, 4 * 86400));
        Changeset c;
        c.id = id;
        c.user = 1 + uniform_index(rng, 4);
        c.t = t;
        g.store.add_changeset(c);
        const auto n_edits = uniform_index(rng, 5);
        for (std::size_t k = 0; k < n_edits; ++k) {
            const std::uint64_t obj = 1 + uniform_index(rng, 12);
            if (deleted.contains(obj)) {
                continue;
            }
            Edit e;
            e.object.id = obj;
            e.t = t + static_cast<Timestamp>(k) * 10;
            const auto prev = latest.find(obj);
            if (prev == latest.end()) {
                e.op = EditOp::Create;
                e.ver = 1;
            } else {
                e.op = uniform_index(rng, 5) == 0 ? EditOp::Delete : EditOp::Modify;
                e.ver = prev->second + 1;
            }
            if (e.op != EditOp::Delete) {
                for (const char* key : kKeys) {
                    if (uniform_index(rng, 3) == 0) {
                        e.object.tags[key] = "v";
                    }
                }
            } else {
                e.object.tags = g.versions[obj][e.ver - 1];
                deleted.insert(obj);
            }
            e.object.ver = e.ver;
            latest[obj] = e.ver;
            g.versions[obj][e.ver] = e.op == EditOp::Delete ? Tags{} : e.object.tags;
            g.store.record_version({obj, ObjectType::Node},
                                   VersionEntry{e.ver, id, c.user, e.t, e.op == EditOp::Delete, {}, g.versions[obj][e.ver]});
            g.store.append_edit(id, c.user, e);
        }
    }
    return g;
}

UserSnapshot oracle(const Generated& g, UserId user, Timestamp t) {
    UserSnapshot s;
    std::set<int> weeks;
    std::set<std::string> distinct;
    for (const auto& c : g.store.changesets()) {
        if (c.user != user) {
            continue;
        }
        if (c.t < t) {
            weeks.insert(iso_week_key(c.t));
            if (!s.account_created || c.t < *s.account_created) {
                s.account_created = c.t;
            }
        }
        for (const auto& e : c.edits) {
            if (e.t >= t) {
                continue;
            }
            s.past_creates += e.op == EditOp::Create;
            s.past_modifications += e.op == EditOp::Modify;
            s.past_deletes += e.op == EditOp::Delete;
            if (e.op == EditOp::Delete) {
                continue;
            }
            const Tags before = e.op == EditOp::Create ? Tags{} : g.versions.at(e.object.id).at(e.ver - 1);
            for (const auto& [k, v] : e.object.tags) {
                if (!before.contains(k) && top12_index(k) >= 0) {
                    ++s.top12_additions;
                    distinct.insert(k);
                }
            }
        }
    }
    s.contributions = s.past_creates + s.past_modifications + s.past_deletes;
    s.top12_distinct = distinct.size();
    s.active_weeks = weeks.size();
    return s;
}

void check_same(const UserSnapshot& got, const UserSnapshot& want) {
    CHECK(got.past_creates == want.past_creates);
    CHECK(got.past_modifications == want.past_modifications);
    CHECK(got.past_deletes == want.past_deletes);
    CHECK(got.contributions == want.contributions);
    CHECK(got.top12_additions == want.top12_additions);
    CHECK(got.top12_distinct == want.top12_distinct);
    CHECK(got.active_weeks == want.active_weeks);
    CHECK(got.account_created == want.account_created);
}

} // namespace

TEST_SUITE("user_history") {

TEST_CASE("snapshots match a brute-force scan") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = random_history(seed);
        const auto index = UserHistoryIndex::build(g.store);
        Rng rng(seed + 100);
        for (const auto& c : g.store.changesets()) {
            check_same(index.at(c.user, c.t), oracle(g, c.user, c.t));
            const Timestamp probe = c.t + static_cast<Timestamp>(uniform_index(rng, 40)) - 20;
            const UserId user = 1 + uniform_index(rng, 4);
            check_same(index.at(user, probe), oracle(g, user, probe));
        }
    }
}

TEST_CASE("queries are strict in time") {
    const auto g = random_history(3);
    const auto index = UserHistoryIndex::build(g.store);
    const auto& first = g.store.changesets().front();
    const auto s = index.at(first.user, first.t);
    CHECK(s.contributions == 0);
    CHECK(s.active_weeks == 0);
    CHECK_FALSE(s.account_created);
    CHECK(index.at(first.user, first.t + 1).account_created == first.t);
}

TEST_CASE("unknown users have no history") {
    const auto index = UserHistoryIndex::build(random_history(1).store);
    const auto s = index.at(999, 2000000000);
    CHECK(s.contributions == 0);
    CHECK_FALSE(s.account_created);
}

TEST_CASE("known registration times override the proxy") {
    auto index = UserHistoryIndex::build(random_history(1).store);
    index.set_account_created(2, 12345);
    CHECK(index.at(2, 100).account_created == 12345);
}

TEST_CASE("top-12 keys and added keys") {
    CHECK(top12_index("building") == 0);
    CHECK(top12_index("oneway") == 11);
    CHECK(top12_index("shop") == -1);
    const Tags before{{"a", "1"}, {"b", "2"}};
    const Tags after{{"b", "3"}, {"c", "4"}, {"d", "5"}};
    const auto added = added_keys(before, after);
    REQUIRE(added.size() == 2);
    CHECK(added[0] == "c");
    CHECK(added[1] == "d");
}

} // TEST_SUITE
