from __future__ import annotations

import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphgen import random_ir, relabel, to_nx
from udfpart.errors import DuplicateScanError, IrFormatError, PathExplosionError
from udfpart.fixtures import GraphBuilder, reddit_consumer
from udfpart.ir import Flow, IrEdge, IrGraph, IrNode, NodeKind as K, is_valid, validate

seeds = st.integers(0, 2**32 - 1)


def codes(g: IrGraph) -> set[str]:
    return {v.code for v in validate(g)}


def chain_graph() -> IrGraph:
    b = GraphBuilder("chain")
    ids = [b.node(K.SCAN, "D1", "", "s"), b.node(K.APPLY, "", "s", "s"), b.node(K.PAIR), b.node(K.JOIN), b.node(K.WRITE, "out")]
    b.chain(*ids)
    return b.build()


def test_kind_taxonomy_is_closed():
    assert len(K) == 29
    with pytest.raises(IrFormatError):
        K.parse("Teleport")
    with pytest.raises(IrFormatError):
        IrGraph.from_dict({"ir_id": "x", "nodes": [{"id": 0, "kind": "Teleport"}], "edges": []})


def test_validate_examples():
    assert "S empty" in codes(IrGraph("empty", [], []))
    assert validate(chain_graph()) == []
    b = GraphBuilder("cyc")
    s, a1, a2, a3, w = b.node(K.SCAN, "D"), b.node(K.APPLY), b.node(K.APPLY), b.node(K.APPLY), b.node(K.WRITE, "o")
    b.chain(s, a1, a2, a3, a1)
    b.edge(a3, w)
    assert "cycle" in codes(b.build())


def test_validate_reports_offenders():
    g = IrGraph("x", [IrNode(0, K.SCAN, "D"), IrNode(1, K.MEMBER), IrNode(2, K.WRITE, "o"), IrNode(3, K.APPLY)],
                [IrEdge(0, 1), IrEdge(1, 2), IrEdge(1, 9), IrEdge(2, 0)])
    vs = {v.code: v.ids for v in validate(g)}
    assert vs["missing label"] == (1,)
    assert vs["dangling edge"] == (9,)
    assert vs["scan has parents"] == (0,)
    assert vs["write has children"] == (2,)
    assert 3 in vs["off scan-write path"]
    assert "cycle" in vs


def test_find_scanner():
    g = reddit_consumer()
    assert g.find_scanner("comments") == 0
    assert g.find_scanner("nope") is None
    b = GraphBuilder("dup")
    s1, s2, w = b.node(K.SCAN, "D1"), b.node(K.SCAN, "D1"), b.node(K.WRITE, "o")
    b.edge(s1, w)
    b.edge(s2, w)
    g = b.build()
    with pytest.raises(DuplicateScanError):
        g.find_scanner("D1")
    assert "duplicate scan D1" in codes(g)


def test_find_all_paths_small():
    b = GraphBuilder("d")
    s, a, bb, t = b.node(K.SCAN, "D"), b.node(K.APPLY), b.node(K.APPLY), b.node(K.WRITE, "o")
    b.chain(s, a, t)
    b.chain(s, bb, t)
    g = b.build()
    assert g.find_all_paths(s, t) == [(s, a, t), (s, bb, t)]
    assert g.find_all_paths(a, bb) == []
    c = chain_graph()
    assert c.find_all_paths(0, 1) == [(0, 1)]


def _dfs_paths(edges: dict, src: int, dst: int) -> list[tuple]:
    out = []

    def rec(v, path):
        if v == dst:
            out.append(tuple(path))
            return
        for c in edges.get(v, ()):
            if c not in path:
                rec(c, path + [c])

    rec(src, [src])
    return out


@given(seeds)
def test_find_all_paths_matches_recursive_dfs(seed):
    rng = np.random.default_rng(seed)
    n = 10
    edges = {}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.35:
                edges.setdefault(u, []).append(v)
    g = IrGraph("r", [IrNode(i, K.APPLY) for i in range(n)], [IrEdge(u, v) for u, vs in edges.items() for v in vs])
    for src, dst in [(0, n - 1), (1, n - 2), (2, 7)]:
        got = g.find_all_paths(src, dst)
        assert got == sorted(_dfs_paths(edges, src, dst))
        assert len(set(got)) == len(got)
        assert all(len(set(p)) == len(p) for p in got)


def test_path_cap():
    # a ladder of 12 diamonds has 4096 paths
    nodes, edges = [IrNode(0, K.SCAN, "D")], []
    prev = 0
    for i in range(12):
        a, b, j = 3 * i + 1, 3 * i + 2, 3 * i + 3
        nodes += [IrNode(a, K.APPLY), IrNode(b, K.APPLY), IrNode(j, K.APPLY)]
        edges += [IrEdge(prev, a), IrEdge(prev, b), IrEdge(a, j), IrEdge(b, j)]
        prev = j
    g = IrGraph("ladder", nodes, edges)
    assert len(g.find_all_paths(0, prev)) == 4096
    with pytest.raises(PathExplosionError):
        g.find_all_paths(0, prev, cap=1000)


def test_is_join_anchor_examples():
    g = chain_graph()
    assert g.is_join_anchor(1)
    b = GraphBuilder("nojoin")
    s, a, p, w = b.node(K.SCAN, "D"), b.node(K.APPLY), b.node(K.PAIR), b.node(K.WRITE, "o")
    b.chain(s, a, p, w)
    assert not b.build().is_join_anchor(a)
    assert reddit_consumer().is_join_anchor(5)
    assert reddit_consumer().nodes[5].kind is K.CONDITIONAL


@given(seeds)
def test_is_join_anchor_ignores_unrelated_edges(seed):
    rng = np.random.default_rng(seed)
    g = random_ir(rng)
    before = {v: g.is_join_anchor(v) for v in g.nodes}
    mids = [v for v, n in g.nodes.items() if n.kind not in (K.PAIR, K.JOIN, K.WRITE, K.SORT)]
    u, v = sorted(rng.choice(mids, size=2, replace=False).tolist()) if len(mids) > 1 else (mids[0], mids[0])
    if u == v or (u, v) in {(e.src, e.dst) for e in g.edges}:
        return
    h = IrGraph(g.ir_id, g.nodes.values(), list(g.edges) + [IrEdge(u, v)])
    assert {x: h.is_join_anchor(x) for x in h.nodes} == before


@given(seeds)
def test_topological_order_visits_each_node_once(seed):
    g = random_ir(np.random.default_rng(seed))
    assert is_valid(g)
    order = g.topological_order()
    assert sorted(order) == sorted(g.nodes)
    pos = {v: i for i, v in enumerate(order)}
    assert all(pos[e.src] < pos[e.dst] for e in g.edges)
    assert order == list(nx.lexicographical_topological_sort(to_nx(g)))


@given(seeds)
def test_json_round_trip(seed):
    rng = np.random.default_rng(seed)
    g, _ = relabel(random_ir(rng), rng)
    text = g.to_json()
    h = IrGraph.from_json(text)
    assert h == g
    assert h.to_json() == text
    assert h.scans == g.scans and h.writes == g.writes


def test_json_field_order_and_errors():
    d = json.loads(chain_graph().to_json())
    assert list(d) == ["ir_id", "nodes", "edges"]
    assert list(d["nodes"][0]) == ["id", "kind", "label", "in_type", "out_type"]
    assert list(d["edges"][0]) == ["src", "dst", "flow"]
    with pytest.raises(IrFormatError):
        IrGraph.from_json("{not json")
    with pytest.raises(IrFormatError):
        IrGraph.from_dict({"nodes": []})
    with pytest.raises(IrFormatError):
        IrGraph.from_dict({"ir_id": "x", "nodes": [{"id": 0, "kind": "Scan"}], "edges": [{"src": 0, "dst": 0, "flow": "Sideways"}]})


def test_parallel_data_and_control_collapse_to_data():
    g = IrGraph("p", [IrNode(0, K.SCAN, "D"), IrNode(1, K.APPLY)], [IrEdge(0, 1, Flow.CONTROL), IrEdge(0, 1, Flow.DATA)])
    assert g.flow(0, 1) is Flow.DATA
    assert g.children(0) == (1,)
