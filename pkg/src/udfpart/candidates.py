"""Partitioner-candidate enumeration from consumer IR graphs.

Enumeration runs in two steps. ``search`` walks every simple path from a
dataset's scan node down to the first join anchor it meets (a node feeding a
``Pair`` that feeds a ``Join``). ``merge`` then unions all paths that share the
same (root, leaf) pair into one two-terminal DAG.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import signature as sig
from .errors import PathExplosionError
from .ir import DEFAULT_PATH_CAP, IrEdge, IrGraph, IrNode, NodeKind


class Strategy(str, enum.Enum):
    HASH = "Hash"
    RANGE = "Range"


class TwoTerminalDag(IrGraph):
    """A subgraph with one source (``root``) and one sink (``leaf``)."""

    def __init__(self, nodes: Iterable[IrNode], edges: Iterable[IrEdge], root: int, leaf: int, ir_id: str = ""):
        super().__init__(ir_id, nodes, edges)
        self.root = root
        self.leaf = leaf

    @classmethod
    def from_paths(cls, graph: IrGraph, paths: Sequence[Sequence[int]]) -> "TwoTerminalDag":
        node_ids: set[int] = set()
        edge_set: set[IrEdge] = set()
        for p in paths:
            node_ids.update(p)
            for a, b in zip(p, p[1:]):
                edge_set.add(IrEdge(a, b, graph.flow(a, b)))
        root, leaf = paths[0][0], paths[0][-1]
        return cls((graph.nodes[i] for i in node_ids), edge_set, root, leaf, graph.ir_id)

    def union(self, other: "TwoTerminalDag") -> "TwoTerminalDag":
        nodes = dict(self.nodes)
        nodes.update(other.nodes)
        return TwoTerminalDag(nodes.values(), set(self.edges) | set(other.edges), self.root, self.leaf, self.ir_id)

    def paths(self, cap: int = DEFAULT_PATH_CAP) -> list[tuple[int, ...]]:
        return self.find_all_paths(self.root, self.leaf, cap=cap)

    def signature(self) -> str:
        return sig.candidate_signature(self)


def two_terminal_violations(dag: TwoTerminalDag) -> list[str]:
    out = []
    sources = [v for v in dag.nodes if not dag.parents(v)]
    sinks = [v for v in dag.nodes if not dag.children(v)]
    if sources != [dag.root]:
        out.append(f"sources {sources} != root {dag.root}")
    elif dag.kind(dag.root) is not NodeKind.SCAN:
        out.append("root is not a Scan")
    if sinks != [dag.leaf]:
        out.append(f"sinks {sinks} != leaf {dag.leaf}")
    if dag.topological_order() is None:
        out.append("cycle")
        return out
    on_path = {v for p in dag.paths() for v in p}
    if on_path != set(dag.nodes):
        out.append(f"nodes off root-leaf paths: {sorted(set(dag.nodes) - on_path)}")
    return out


@dataclass
class PartitionerCandidate:
    subgraph: TwoTerminalDag
    dataset: str
    origin_ir: str
    strategy: Strategy = Strategy.HASH
    signature: str = field(default="")

    def __post_init__(self):
        if not self.signature:
            self.signature = self.subgraph.signature()

    @property
    def origin_root(self) -> int:
        return self.subgraph.root

    @property
    def origin_leaf(self) -> int:
        return self.subgraph.leaf

    @property
    def key(self) -> tuple[str, str]:
        """Identity used for deduplication and ranking ties."""
        return (self.signature, self.strategy.value)

    def path_signatures(self) -> list[str]:
        return sig.candidate_path_signatures(self.subgraph)

    def to_dict(self) -> dict:
        g = self.subgraph
        return {
            "dataset": self.dataset,
            "origin_ir": self.origin_ir,
            "origin_root": self.origin_root,
            "origin_leaf": self.origin_leaf,
            "strategy": self.strategy.value,
            "nodes": [n.to_dict() for n in g.nodes.values()],
            "edges": [e.to_dict() for e in g.edges],
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionerCandidate":
        dag = TwoTerminalDag(
            [IrNode.from_dict(n) for n in d["nodes"]],
            [IrEdge.from_dict(e) for e in d["edges"]],
            int(d["origin_root"]),
            int(d["origin_leaf"]),
            d.get("origin_ir", ""),
        )
        c = cls(dag, d["dataset"], d.get("origin_ir", ""), Strategy(d.get("strategy", "Hash")))
        if d.get("signature") and d["signature"] != c.signature:
            raise ValueError("candidate signature does not match its subgraph")
        return c


def search(graph: IrGraph, scan: int, cap: int = DEFAULT_PATH_CAP) -> list[TwoTerminalDag]:
    """Single-path partial candidates: every simple path from ``scan`` that
    stops at the first join anchor it reaches.

    Paths that run into a Write (or a dead end) before any anchor produce
    nothing. The scan node itself is never a leaf.
    """
    out: list[TwoTerminalDag] = []
    path = [scan]

    def walk(v: int) -> None:
        for c in graph.children(v):
            if c in path:
                continue
            path.append(c)
            if graph.is_join_anchor(c):
                if len(out) >= cap:
                    raise PathExplosionError(f"{graph.ir_id}: more than {cap} partial candidates")
                out.append(TwoTerminalDag.from_paths(graph, [tuple(path)]))
            elif graph.kind(c) is not NodeKind.WRITE:
                walk(c)
            path.pop()

    walk(scan)
    return out


def anchor_strategies(graph: IrGraph, anchor: int) -> list[Strategy]:
    """Hash for a join key; a Range variant as well when the key also feeds a Sort."""
    strategies = [Strategy.HASH]
    if any(graph.kind(c) is NodeKind.SORT for c in graph.children(anchor)):
        strategies.append(Strategy.RANGE)
    return strategies


def merge(partials: Sequence[TwoTerminalDag], graph: IrGraph, dataset: str) -> list[PartitionerCandidate]:
    groups: dict[tuple[int, int], TwoTerminalDag] = {}
    for p in partials:
        k = (p.root, p.leaf)
        groups[k] = groups[k].union(p) if k in groups else p
    out = []
    for (root, leaf), dag in sorted(groups.items()):
        for strategy in anchor_strategies(graph, leaf):
            out.append(PartitionerCandidate(dag, dataset, graph.ir_id, strategy))
    return out


def candidates_for_graph(graph: IrGraph, dataset: str, cap: int = DEFAULT_PATH_CAP) -> list[PartitionerCandidate]:
    scan = graph.find_scanner(dataset)
    if scan is None:
        return []
    return merge(search(graph, scan, cap=cap), graph, dataset)


def enumerate_candidates(consumers: Sequence[IrGraph], dataset: str, cap: int = DEFAULT_PATH_CAP) -> list[PartitionerCandidate]:
    """Union of merge(search(...)) over consumers, deduplicated by signature
    and strategy (the earliest origin wins)."""
    seen = set()
    out = []
    for graph in consumers:
        for c in candidates_for_graph(graph, dataset, cap=cap):
            if c.key in seen:
                continue
            seen.add(c.key)
            out.append(c)
    return out


def candidates_by_origin(consumers: Sequence[IrGraph], dataset: str) -> dict[tuple[str, str], list[str]]:
    """Map candidate key to every origin IR it was found in (duplicates kept)."""
    origins = defaultdict(list)
    for graph in consumers:
        for c in candidates_for_graph(graph, dataset):
            origins[c.key].append(graph.ir_id)
    return dict(origins)


def candidates_to_json(cands: Sequence[PartitionerCandidate]) -> str:
    return json.dumps([c.to_dict() for c in cands], indent=1)
