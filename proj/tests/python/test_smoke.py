import json
import os
from pathlib import Path

import pytest

import ovid

DATA = Path(os.environ.get("OVID_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))
FIXTURE = DATA / "fixture"


@pytest.fixture(scope="module")
def store():
    return ovid.Store.ingest(FIXTURE / "changesets.osm", [FIXTURE / "history-1.osc", FIXTURE / "history-2.osc"])


@pytest.fixture(scope="module")
def expected():
    return json.loads((FIXTURE / "expected.json").read_text())


def test_version():
    assert ovid.__version__ == "0.1.0"


def test_ingest_and_roundtrip(store, expected, tmp_path):
    assert len(store) == expected["changesets"]
    assert store.parked() == expected["parked_edits"]
    path = tmp_path / "store.jsonl"
    store.save(path)
    assert ovid.Store.load(path) == store
    c = store.changeset(store.changeset_ids()[0])
    assert c["created_at"].endswith("Z")


def test_mine_matches_fixture(store, expected):
    r = ovid.mine(store, 3)
    positives = sorted(e["changeset"] for e in r["examples"] if e["label"] == 1)
    assert positives == expected["positives"]
    assert len(r["examples"]) == 2 * len(positives)
    assert r["reverts"] == expected["reverts"]


def test_id_extraction():
    assert ovid.extract_changeset_ids("vandalism reverts of changesets 10, 11 and 12") == [10, 11, 12]


def test_train_and_evaluate(store, tmp_path):
    features = ovid.FeatureFile.build(store, 1, 1)
    assert features.d_u == 7 and features.d_e == 15
    cp = ovid.train(features, {"max_epochs": 5, "d_h": 12, "seed": 4})
    scores = cp.predict(features, "test")
    assert len(scores) == features.count("test")
    assert all(0.0 < s < 1.0 for s in scores)
    m = cp.evaluate(features, "test")
    assert m["tp"] + m["fp"] + m["tn"] + m["fn"] == features.count("test")

    path = tmp_path / "model.ckpt"
    cp.save(path)
    assert ovid.Checkpoint.load(path).predict(features, "test") == scores


def test_metrics_and_sweep():
    m = ovid.metrics([1, 1, 0, 0], [1, 0, 0, 1])
    assert m["precision"] == 0.5 and m["recall"] == 0.5
    curve = ovid.pr_sweep([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1], 10)
    assert curve[0] == (0.0, 0.5, 1.0)
    assert curve[-1] == (1.0, 1.0, 0.0)


def test_errors_carry_codes(tmp_path):
    with pytest.raises(ovid.OvidError) as err:
        ovid.Store.load(tmp_path / "missing.jsonl")
    assert err.value.code == "Io"
    with pytest.raises(ovid.OvidError) as err:
        ovid.metrics([], [])
    assert err.value.code == "EmptyEvaluation"
    with pytest.raises(ovid.OvidError) as err:
        ovid.parse_config("bogus = 1")
    assert err.value.code == "InvalidArgument"
