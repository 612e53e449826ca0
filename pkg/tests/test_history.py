from __future__ import annotations

import json
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from udfpart.errors import UnknownIrError
from udfpart.fixtures import loader, reddit_history, workflow_groups
from udfpart.history import DEFAULT_WINDOW, Decision, ExecutionRecord, attribute_runs, HistoryStore, KeyStats, condense, read_log
from udfpart.signature import workload_signature


def rec(app, t, ir, ins=(), outs=(), lat=1.0, **kw):
    return ExecutionRecord(app, float(t), ir, tuple(ins), tuple(outs), lat, **kw)


@pytest.fixture
def store():
    s = HistoryStore()
    for g in (loader("p", "raw", "d"), loader("c", "d", "e", "f"), loader("x", "q", "r", "zz")):
        s.register(g)
    return s


def test_ingest_examples(store):
    store.ingest(rec("a1", 1, "p", [("raw", 10)], [("d", 5)]))
    assert len(store.skeleton.groups) == 1 and not store.skeleton.edges
    store.ingest(rec("a2", 2, "c", [("d", 5)], [("e", 3)]))
    assert len(store.skeleton.edges) == 1
    ((src, dst), runs), = store.skeleton.edges.items()
    assert src == store.signatures["p"] and dst == store.signatures["c"]
    assert runs == (("a2", 2.0, "d", "e"),)
    store.ingest(rec("a3", 3, "p", [("raw", 10)], [("d", 5)]))
    assert len(store.group_of("p").runs) == 2


def test_unknown_ir_and_bad_records(store):
    with pytest.raises(UnknownIrError):
        store.ingest(rec("z", 1, "missing"))
    with pytest.raises(ValueError):
        rec("z", 1, "p", lat=0.0)
    with pytest.raises(ValueError):
        rec("z", 1, "p", ins=[("d", -1)])


def test_predict_consumers_one_edge_downstream():
    graphs, recs = workflow_groups()
    s = HistoryStore()
    for g in graphs:
        s.register(g)
    s.ingest_many(recs)
    assert [ir for ir, _ in s.predict_consumers(graphs[0])] == ["group2", "group4"]
    assert [r.app_id for r in dict(s.predict_consumers(graphs[0]))["group2"]] == ["app2"]
    assert s.predict_consumers(loader("never", "a", "b", "nope")) == []
    assert s.predict_consumers(graphs[2]) == []  # group3 has no downstream consumers
    assert len(s.group_of("group1").runs) == 2


def test_candidate_stats(store):
    for i, t in enumerate((100, 200, 260)):
        store.ingest(rec(f"r{i}", t, "p"))
    assert store.candidate_stats("p", 300) == (3, 60.0, 40.0)
    store.ingest(rec("once", 50, "c"))
    assert store.candidate_stats("c", 80) == (1, 0.0, 30.0)
    assert store.candidate_stats("x", 80) == (0, 0.0, DEFAULT_WINDOW)


def test_key_stats_and_dataset_bytes(store):
    store.ingest(rec("a", 1, "c", [("d", 7)], [("e", 3)], key_stats=(KeyStats("d", 0.2, 10),)))
    store.ingest(rec("b", 2, "c", [("d", 9)], [("e", 3)], key_stats=(KeyStats("d", 0.4, 30),)))
    assert store.key_stats("c", "d") == pytest.approx((0.3, 20.0))
    assert store.key_stats("c", "e") is None
    assert store.key_stats("p", "d") is None
    assert store.dataset_bytes("d") == 9
    assert store.dataset_bytes("nope") is None


def test_file_backed_store_round_trip(tmp_path):
    graphs, recs = reddit_history()
    s = HistoryStore(tmp_path)
    for g in graphs:
        s.register(g)
    s.ingest_many(recs)
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == len(recs)
    assert set(json.loads(lines[0])) == {"app_id", "timestamp", "ir_id", "inputs", "outputs", "latency"}
    again = HistoryStore(tmp_path)
    assert again.skeleton.to_json() == s.skeleton.to_json()
    assert read_log(tmp_path / "log.jsonl") == recs


def test_record_json_round_trip():
    r = rec("a", 1.5, "p", [("d", 7)], [("e", 3)], 2.0, key_stats=(KeyStats("d", 0.5, 4.0),))
    assert ExecutionRecord.from_dict(json.loads(json.dumps(r.to_dict()))) == r


def _random_history(rng):
    graphs = [loader(f"g{i}", f"d{i}", f"d{i + 1}", f"u{i}") for i in range(4)]
    sigs = {g.ir_id: workload_signature(g) for g in graphs}
    recs = []
    for i in range(int(rng.integers(1, 30))):
        g = int(rng.integers(4))
        recs.append(rec(f"a{i}", int(rng.integers(0, 50)), f"g{g}", [(f"d{g}", 1)], [(f"d{g + 1}", 1)]))
    return graphs, sigs, recs


@given(st.integers(0, 2**32 - 1))
def test_condensation_is_order_independent(seed):
    rng = np.random.default_rng(seed)
    graphs, sigs, recs = _random_history(rng)
    a = condense(recs, sigs)
    b = condense([recs[i] for i in rng.permutation(len(recs))], sigs)
    assert a.to_json() == b.to_json()
    assert sum(len(g.runs) for g in a.groups.values()) == len(recs)
    for g in graphs:
        s = sigs[g.ir_id]
        self_edge = (s, s) in a.edges
        assert (s in a.successors(s)) == self_edge


def test_readers_see_consistent_snapshots():
    graphs, recs = reddit_history()
    s = HistoryStore()
    for g in graphs:
        s.register(g)
    prefixes = {condense(recs[:i], s.signatures).to_json() for i in range(len(recs) + 1)}
    seen = []

    def reader():
        for _ in range(300):
            seen.append(s.skeleton.to_json())

    t = threading.Thread(target=reader)
    t.start()
    s.ingest_many(recs)
    t.join()
    assert set(seen) <= prefixes


def test_runs_credit_the_latest_decision_on_any_input():
    runs = [
        rec("r1", 5, "c", [("d", 1)]),
        rec("r2", 15, "c", [("d", 1), ("e", 1)]),
        rec("r3", 25, "c", [("e", 1)]),
        rec("r4", 35, "c", [("d", 1), ("e", 1)]),
        rec("r5", 40, "c", [("zz", 1)]),
    ]
    ds = [Decision("d@10", 10, "d"), Decision("e@20", 20, "e"), Decision("d@30", 30, "d")]
    got = {k: [r.app_id for r in v] for k, v in attribute_runs(runs, ds).items()}
    assert got == {"d@10": ["r2"], "e@20": ["r3"], "d@30": ["r4"]}
    assert attribute_runs(runs, []) == {}


@given(st.integers(0, 2**32 - 1))
def test_each_run_is_credited_at_most_once(seed):
    rng = np.random.default_rng(seed)
    _, _, recs = _random_history(rng)
    ds = [Decision(f"x{i}", float(rng.integers(0, 50)), f"d{int(rng.integers(4))}") for i in range(int(rng.integers(0, 6)))]
    windows = attribute_runs(recs, ds)
    credited = [r for w in windows.values() for r in w]
    assert len(credited) == len({id(r) for r in credited})
    stamp = {d.decision_id: d.timestamp for d in ds}
    for k, w in windows.items():
        assert all(r.timestamp >= stamp[k] for r in w)
