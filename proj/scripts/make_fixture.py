#!/usr/bin/env python3
"""Builds the bundled test history under tests/data.

fixture/   ~200 changesets with planted vandalism and the reverts that undo it.
           expected.json holds the labels as planted, not as computed.
small/     a handful of changesets, one element that must be skipped, plus a
           gzip copy of both files and a broken XML file.
"""

import argparse
import gzip
import json
import random
from pathlib import Path
from xml.sax.saxutils import quoteattr

T0 = 1551398400  # 2019-03-01T00:00:00Z
EDITORS = [
    "JOSM/1.5 (18303 en)",
    "iD 2.20.1",
    "Potlatch 2",
    "StreetComplete 30.0",
    "Vespucci 16.1",
    "MAPS.ME android 10.0",
    "WeirdEditor 0.1",
]
IMAGERY = ["Bing aerial imagery", "Esri World Imagery", ""]
GOOD_TAGS = [
    {"amenity": "cafe", "name": "Cafe Nord"},
    {"amenity": "restaurant", "name": "Zur Post", "cuisine": "german"},
    {"shop": "bakery", "name": "Backstube"},
    {"highway": "bus_stop", "name": "Marktplatz"},
    {"natural": "tree"},
    {"amenity": "bench"},
    {"tourism": "viewpoint", "name": "Aussicht"},
    {"amenity": "pharmacy", "name": "Apotheke am Eck", "opening_hours": "Mo-Fr 08:00-18:00"},
]
WAY_TAGS = [
    {"highway": "residential", "name": "Lindenstrasse"},
    {"building": "yes"},
    {"landuse": "grass"},
    {"highway": "footway", "surface": "gravel"},
    {"waterway": "stream", "name": "Moosbach"},
]
JUNK_TAGS = [
    {"name": "FREE PIZZA HERE", "amenity": "party_house"},
    {"name": "lol", "shop": "nonsense"},
    {"name": "my house!!!", "building": "castle_of_doom"},
    {"fixme": "ha ha", "name": "Nothing"},
]


def iso(t):
    import datetime

    return datetime.datetime.fromtimestamp(t, datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class World:
    def __init__(self, rng):
        self.rng = rng
        self.changesets = []  # dicts
        self.edits = []  # (cs_index, op, element dict)
        self.versions = {}  # (type, id) -> list of {ver, user, cs, tags, loc, refs, deleted}
        self.next_cs = 40001
        self.next_node = 1000
        self.next_way = 5000
        self.clock = T0

    def changeset(self, uid, comment, editor=None, bbox=True):
        self.clock += 1800 + self.rng.randrange(1800)
        cs = {
            "id": self.next_cs,
            "uid": uid,
            "user": f"mapper{uid}",
            "t": self.clock,
            "comment": comment,
            "created_by": editor if editor is not None else self.rng.choice(EDITORS),
            "imagery": self.rng.choice(IMAGERY),
            "bbox": bbox,
            "locs": [],
        }
        self.next_cs += 1
        self.changesets.append(cs)
        return cs

    def _record(self, cs, op, otype, oid, tags, loc=None, refs=None):
        hist = self.versions.setdefault((otype, oid), [])
        ver = hist[-1]["ver"] + 1 if hist else 1
        if op == "delete":
            prior = hist[-1]
            loc = prior["loc"]
        entry = {
            "ver": ver,
            "user": cs["uid"],
            "cs": cs["id"],
            "tags": dict(tags) if op != "delete" else {},
            "loc": loc,
            "refs": list(refs or []),
            "deleted": op == "delete",
        }
        hist.append(entry)
        if loc is not None:
            cs["locs"].append(loc)
        self.edits.append((cs, op, otype, oid, entry))
        return entry

    def node(self, cs, tags):
        oid = self.next_node
        self.next_node += 1
        loc = (round(48.10 + self.rng.random() * 0.05, 7), round(11.50 + self.rng.random() * 0.08, 7))
        self._record(cs, "create", "node", oid, tags, loc=loc)
        return ("node", oid)

    def way(self, cs, tags, nodes):
        oid = self.next_way
        self.next_way += 1
        self._record(cs, "create", "way", oid, tags, refs=[n[1] for n in nodes])
        return ("way", oid)

    def modify(self, cs, key, tags):
        prior = self.versions[key][-1]
        self._record(cs, "modify", key[0], key[1], tags, loc=prior["loc"], refs=prior["refs"])

    def delete(self, cs, key):
        self._record(cs, "delete", key[0], key[1], {})

    def current_tags(self, key):
        return dict(self.versions[key][-1]["tags"])


def element_xml(op, otype, oid, e, cs, t):
    attrs = {
        "id": oid,
        "version": e["ver"],
        "changeset": cs["id"],
        "uid": cs["uid"],
        "user": cs["user"],
        "timestamp": iso(t),
    }
    if op == "delete":
        attrs["visible"] = "false"
    if otype == "node" and e["loc"] is not None:
        attrs["lat"] = f"{e['loc'][0]:.7f}"
        attrs["lon"] = f"{e['loc'][1]:.7f}"
    head = " ".join(f"{k}={quoteattr(str(v))}" for k, v in attrs.items())
    body = []
    if op != "delete":
        for ref in e["refs"]:
            body.append(f'      <nd ref="{ref}"/>')
        for k, v in sorted(e["tags"].items()):
            body.append(f"      <tag k={quoteattr(k)} v={quoteattr(v)}/>")
    if not body:
        return f"    <{otype} {head}/>"
    return f"    <{otype} {head}>\n" + "\n".join(body) + f"\n    </{otype}>"


def write_changesets(path, changesets, extra=""):
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6" generator="make_fixture">']
    for cs in changesets:
        attrs = {
            "id": cs["id"],
            "created_at": iso(cs["t"]),
            "closed_at": iso(cs["t"] + 600),
            "open": "false",
            "user": cs["user"],
            "uid": cs["uid"],
        }
        if cs["bbox"] and cs["locs"]:
            lats = [p[0] for p in cs["locs"]]
            lons = [p[1] for p in cs["locs"]]
            attrs.update(
                min_lat=f"{min(lats):.7f}", min_lon=f"{min(lons):.7f}", max_lat=f"{max(lats):.7f}", max_lon=f"{max(lons):.7f}"
            )
        head = " ".join(f"{k}={quoteattr(str(v))}" for k, v in attrs.items())
        lines.append(f"  <changeset {head}>")
        lines.append(f"    <tag k=\"comment\" v={quoteattr(cs['comment'])}/>")
        lines.append(f"    <tag k=\"created_by\" v={quoteattr(cs['created_by'])}/>")
        if cs["imagery"]:
            lines.append(f"    <tag k=\"imagery_used\" v={quoteattr(cs['imagery'])}/>")
        lines.append("  </changeset>")
    if extra:
        lines.append(extra)
    lines.append("</osm>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_osc(path, edits, extra=""):
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', '<osmChange version="0.6" generator="make_fixture">']
    for cs, op, otype, oid, e in edits:
        t = cs["t"] + 60
        lines.append(f"  <{op}>")
        lines.append(element_xml(op, otype, oid, e, cs, t))
        lines.append(f"  </{op}>")
    if extra:
        lines.append(extra)
    lines.append("</osmChange>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_fixture(out_dir, seed):
    rng = random.Random(seed)
    w = World(rng)
    regular = list(range(100, 160))
    vandals = list(range(200, 230))
    reverters = list(range(900, 906))

    pool = []
    regular_cs = []

    def regular_changeset(uid):
        cs = w.changeset(uid, rng.choice(["add shops", "Café hinzugefügt", "survey", "paths near the river",
                                           "buildings from imagery", "fix names", ""]))
        made = [w.node(cs, rng.choice(GOOD_TAGS)) for _ in range(1 + rng.randrange(3))]
        if rng.random() < 0.35:
            extra = [w.node(cs, {}) for _ in range(2)]
            pool.append(w.way(cs, rng.choice(WAY_TAGS), extra))
        if pool and rng.random() < 0.35:
            key = rng.choice(pool)
            if not w.versions[key][-1]["deleted"]:
                tags = w.current_tags(key)
                tags["check_date"] = "2019-05-01"
                w.modify(cs, key, tags)
        pool.extend(made)
        regular_cs.append(cs["id"])
        return cs

    for i in range(70):
        regular_changeset(regular[i % len(regular)])

    explicit_pos, deletion_pos, unattributed, reverts = [], [], [], []
    other_revert_cs = []

    def junk_name(tags):
        tags = dict(tags)
        tags["name"] = rng.choice(["HACKED", "poop street", "www.spam.example", "LOOOL"])
        return tags

    # Explicit path: each vandal renames two existing objects.
    for k, uid in enumerate(vandals[:18]):
        targets = [key for key in pool if not w.versions[key][-1]["deleted"]]
        own = []
        for _ in range(2):
            cs = w.changeset(uid, rng.choice(["", "update", "fixed", "better names"]))
            key = rng.choice(targets)
            before = w.current_tags(key)
            w.modify(cs, key, junk_name(before))
            own.append((cs, key, before))
            if rng.random() < 0.5:
                regular_changeset(rng.choice(regular))
        reverter = reverters[k % len(reverters)]
        a, b = own[0][0]["id"], own[1][0]["id"]
        style = k % 6
        if style == 0:
            comments = [f"Reverting vandalism in changesets {a} and {b}"]
        elif style == 1:
            comments = [f"Revert vandalism from changeset {a}", f"revert VANDALISM changeset #{b}"]
        elif style == 2:
            comments = [f"Vandalism revert, see https://www.openstreetmap.org/changeset/{a} and changeset {b}"]
        elif style == 3:
            prev_own = next((c["id"] for c in reversed(w.changesets) if c["uid"] == reverter), None)
            mention = f", supersedes my changeset {prev_own}" if prev_own else ""
            comments = [f"revert vandalism: changesets {a}, {b}{mention}"]
        elif style == 4:
            comments = [f"Undo vandalism changesets:{a},{b} (also changeset 999999999 which does not exist)"]
        else:
            if other_revert_cs:
                comments = [f"Vandalism cleanup for changesets {a}, {b} and {other_revert_cs[-1]}"]
            else:
                comments = [f"Vandalism cleanup for changesets {a}, {b}"]
        if len(comments) == 1:
            rc = w.changeset(reverter, comments[0], editor="JOSM/1.5 (18303 en)")
            for cs, key, before in own:
                w.modify(rc, key, before)
            reverts.append(rc["id"])
            other_revert_cs.append(rc["id"])
        else:
            for (cs, key, before), comment in zip(own, comments):
                rc = w.changeset(reverter, comment, editor="JOSM/1.5 (18303 en)")
                w.modify(rc, key, before)
                reverts.append(rc["id"])
                other_revert_cs.append(rc["id"])
        explicit_pos.extend([a, b])

    # Deletion path: vandals create junk, the revert deletes it without naming ids.
    for k, uid in enumerate(vandals[18:29]):
        cs1 = w.changeset(uid, rng.choice(["", "new places", "added stuff"]))
        junk = [w.node(cs1, rng.choice(JUNK_TAGS)) for _ in range(2)]
        cs2 = w.changeset(uid, rng.choice(["", "more", "edit"]))
        w.modify(cs2, junk[0], junk_name(w.current_tags(junk[0])))
        junk.append(w.node(cs2, rng.choice(JUNK_TAGS)))
        reverter = reverters[(k + 3) % len(reverters)]
        if k == 0:
            # The reverter touched the object before deleting it; that version does not count.
            pre = w.changeset(reverter, "mark for review")
            tags = w.current_tags(junk[0])
            tags["fixme"] = "check this"
            w.modify(pre, junk[0], tags)
        if rng.random() < 0.5:
            regular_changeset(rng.choice(regular))
        if k == 1:
            comment = "Revert vandalism of changeset 999999998"  # named id is unknown: falls back to deletions
        else:
            comment = rng.choice(["Revert vandalism", "reverting obvious vandalism", "Vandalism removed"])
        rc = w.changeset(reverter, comment, editor="JOSM/1.5 (18303 en)")
        for key in junk:
            w.delete(rc, key)
        reverts.append(rc["id"])
        deletion_pos.extend([cs1["id"], cs2["id"]])

    # Ambiguous: the vandal edited an object someone else created; deleting it names nobody.
    uid = vandals[29]
    cs = w.changeset(uid, "rename")
    key = next(k for k in pool if k[0] == "node" and not w.versions[k][-1]["deleted"] and len(w.versions[k]) == 1)
    w.modify(cs, key, junk_name(w.current_tags(key)))
    unattributed.append(cs["id"])
    rc = w.changeset(reverters[0], "Revert vandalism")
    w.delete(rc, key)
    reverts.append(rc["id"])

    # A revert that is not about vandalism names a regular changeset.
    target = regular_cs[3]
    w.changeset(reverters[1], f"Revert changeset {target}, wrong import")

    while len(w.changesets) < 200:
        regular_changeset(rng.choice(regular))

    out_dir.mkdir(parents=True, exist_ok=True)
    write_changesets(out_dir / "changesets.osm", w.changesets)
    cut = len(w.edits) // 2
    write_osc(out_dir / "history-1.osc", w.edits[:cut])
    orphan = (
        '  <modify>\n    <node id="999" version="2" changeset="77777777" uid="5" user="ghost" '
        'timestamp="2019-06-01T00:00:00Z" lat="48.1" lon="11.5"/>\n  </modify>'
    )
    write_osc(out_dir / "history-2.osc", w.edits[cut:], extra=orphan)

    deletes = []
    for cs, op, otype, oid, e in w.edits:
        if op == "delete":
            prior = w.versions[(otype, oid)][e["ver"] - 2]
            deletes.append({"changeset": cs["id"], "type": otype, "id": oid, "ver": e["ver"], "tags": prior["tags"]})

    expected = {
        "changesets": len(w.changesets),
        "explicit_positives": sorted(explicit_pos),
        "deletion_positives": sorted(deletion_pos),
        "positives": sorted(explicit_pos + deletion_pos),
        "unattributed_vandalism": unattributed,
        "reverts": sorted(reverts),
        "non_vandalism_revert_target": target,
        "parked_edits": 1,
        "deletes": deletes,
    }
    (out_dir / "expected.json").write_text(json.dumps(expected, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def build_small(out_dir, seed):
    rng = random.Random(seed)
    w = World(rng)
    a = w.changeset(11, "initial import of benches")
    n1 = w.node(a, {"amenity": "bench"})
    n2 = w.node(a, {"amenity": "cafe", "name": "Kiosk"})
    b = w.changeset(12, "street", bbox=False)
    n3 = w.node(b, {})
    way = w.way(b, {"highway": "residential", "name": "Ringstraße"}, [n1, n3])
    c = w.changeset(13, "vandal")
    w.modify(c, n2, {"amenity": "cafe", "name": "POOP"})
    d = w.changeset(14, "Revert vandalism of changeset %d" % c["id"])
    w.modify(d, n2, {"amenity": "cafe", "name": "Kiosk"})
    e = w.changeset(12, "remove street")
    w.delete(e, way)
    w.delete(e, n1)
    broken = '  <changeset id="40999" created_at="2019-04-01T00:00:00Z" user="nouid">\n    <tag k="comment" v="no uid here"/>\n  </changeset>'
    out_dir.mkdir(parents=True, exist_ok=True)
    write_changesets(out_dir / "changesets.osm", w.changesets, extra=broken)
    write_osc(out_dir / "edits.osc", w.edits)
    for name in ["changesets.osm", "edits.osc"]:
        raw = (out_dir / name).read_bytes()
        with open(out_dir / (name + ".gz"), "wb") as fh:
            with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
                gz.write(raw)
    (out_dir / "broken.osc").write_text(
        '<?xml version="1.0"?>\n<osmChange version="0.6">\n  <create>\n    <node id="1" version="1"\n</osmChange>\n',
        encoding="utf-8",
    )
    (out_dir / "expected.json").write_text(
        json.dumps({"changesets": len(w.changesets), "skipped": 1, "edits": len(w.edits)}, indent=1) + "\n",
        encoding="utf-8",
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "data"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out)
    build_fixture(out / "fixture", args.seed)
    build_small(out / "small", args.seed + 1)


if __name__ == "__main__":
    main()
