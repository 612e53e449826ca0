"""IR graphs: nodes, edges, scan/write terminals and traversal helpers.

An IR graph is a DAG of atomic computations compiled from a UDF-centric
workload. Graphs are immutable once built; every query below is pure.
"""

from __future__ import annotations

import enum
import heapq
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import DuplicateScanError, IrFormatError, PathExplosionError

DEFAULT_PATH_CAP = 10_000


class NodeKind(str, enum.Enum):
    # lambda abstractions
    MEMBER = "Member"
    METHOD = "Method"
    LITERAL = "Literal"
    SELF_ID = "SelfId"
    OPAQUE_FUNC = "OpaqueFunc"
    # higher-order composers
    EQUAL = "Equal"
    NOT_EQUAL = "NotEqual"
    LESS_THAN = "LessThan"
    GREATER_THAN = "GreaterThan"
    AND = "And"
    OR = "Or"
    NOT = "Not"
    ADD = "Add"
    SUBTRACT = "Subtract"
    MULTIPLY = "Multiply"
    CONSTRUCT = "Construct"
    CONDITIONAL = "Conditional"
    INDEX = "Index"
    # collection operators
    SCAN = "Scan"
    WRITE = "Write"
    APPLY = "Apply"
    HASH = "Hash"
    FILTER = "Filter"
    FLATTEN = "Flatten"
    JOIN = "Join"
    AGGREGATE = "Aggregate"
    PARTITION = "Partition"
    PAIR = "Pair"
    SORT = "Sort"

    @classmethod
    def parse(cls, tag: str) -> "NodeKind":
        try:
            return cls(tag)
        except ValueError:
            raise IrFormatError(f"unknown node kind {tag!r}") from None


LABELLED_KINDS = frozenset(
    {NodeKind.MEMBER, NodeKind.METHOD, NodeKind.OPAQUE_FUNC, NodeKind.LITERAL}
)


class Flow(str, enum.Enum):
    DATA = "Data"
    CONTROL = "Control"

    @property
    def marker(self) -> str:
        return "-d>" if self is Flow.DATA else "-c>"


@dataclass(frozen=True)
class IrNode:
    id: int
    kind: NodeKind
    label: str = ""
    in_type: str = ""
    out_type: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "label": self.label,
            "in_type": self.in_type,
            "out_type": self.out_type,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IrNode":
        try:
            return cls(
                id=int(d["id"]),
                kind=NodeKind.parse(d["kind"]),
                label=str(d.get("label", "")),
                in_type=str(d.get("in_type", "")),
                out_type=str(d.get("out_type", "")),
            )
        except KeyError as e:
            raise IrFormatError(f"node missing field {e}") from None


@dataclass(frozen=True, order=True)
class IrEdge:
    src: int
    dst: int
    flow: Flow = Flow.DATA

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst, "flow": self.flow.value}

    @classmethod
    def from_dict(cls, d: dict) -> "IrEdge":
        try:
            flow = Flow(d.get("flow", "Data"))
        except ValueError:
            raise IrFormatError(f"unknown edge flow {d.get('flow')!r}") from None
        try:
            return cls(int(d["src"]), int(d["dst"]), flow)
        except KeyError as e:
            raise IrFormatError(f"edge missing field {e}") from None


@dataclass(frozen=True)
class Violation:
    code: str
    ids: tuple = ()

    def __str__(self) -> str:
        return f"{self.code} {list(self.ids)}" if self.ids else self.code


class IrGraph:
    """Directed acyclic graph of atomic computations.

    ``scans`` and ``writes`` are derived from node kinds. Adjacency lists are
    kept sorted by node id so every traversal is deterministic.
    """

    def __init__(self, ir_id: str, nodes: Iterable[IrNode], edges: Iterable[IrEdge]):
        self.ir_id = ir_id
        self.nodes: dict[int, IrNode] = {}
        for n in sorted(nodes, key=lambda n: n.id):
            if n.id in self.nodes:
                raise IrFormatError(f"duplicate node id {n.id}")
            self.nodes[n.id] = n
        self.edges: tuple[IrEdge, ...] = tuple(sorted(set(edges)))
        children = defaultdict(list)
        parents = defaultdict(list)
        self._flow: dict[tuple[int, int], Flow] = {}
        for e in self.edges:
            children[e.src].append(e.dst)
            parents[e.dst].append(e.src)
            # parallel data+control edges between one pair collapse to data
            if e.flow is Flow.DATA or (e.src, e.dst) not in self._flow:
                self._flow[(e.src, e.dst)] = e.flow
        self._children = {k: tuple(sorted(set(v))) for k, v in children.items()}
        self._parents = {k: tuple(sorted(set(v))) for k, v in parents.items()}
        self.scans = frozenset(i for i, n in self.nodes.items() if n.kind is NodeKind.SCAN)
        self.writes = frozenset(i for i, n in self.nodes.items() if n.kind is NodeKind.WRITE)

    def __repr__(self) -> str:
        return f"IrGraph({self.ir_id!r}, {len(self.nodes)} nodes, {len(self.edges)} edges)"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IrGraph):
            return NotImplemented
        return (self.ir_id, self.nodes, self.edges) == (other.ir_id, other.nodes, other.edges)

    def __hash__(self) -> int:
        return hash((self.ir_id, self.edges))

    def children(self, v: int) -> tuple[int, ...]:
        return self._children.get(v, ())

    def parents(self, v: int) -> tuple[int, ...]:
        return self._parents.get(v, ())

    def flow(self, src: int, dst: int) -> Flow:
        return self._flow[(src, dst)]

    def kind(self, v: int) -> NodeKind:
        return self.nodes[v].kind

    def topological_order(self) -> list[int] | None:
        """Kahn's algorithm, smallest id first. ``None`` if there is a cycle."""
        indeg = {v: 0 for v in self.nodes}
        for e in self.edges:
            if e.src in self.nodes and e.dst in self.nodes and e.src != e.dst:
                indeg[e.dst] += 1
        heap = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for c in self.children(v):
                if c not in indeg:
                    continue
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(order) != len(self.nodes):
            return None
        return order

    def find_scanner(self, dataset: str) -> int | None:
        hits = [i for i in sorted(self.scans) if self.nodes[i].label == dataset]
        if len(hits) > 1:
            raise DuplicateScanError(f"{self.ir_id}: {len(hits)} scans of {dataset!r}: {hits}")
        return hits[0] if hits else None

    def datasets_read(self) -> list[str]:
        return sorted({self.nodes[i].label for i in self.scans})

    def is_join_anchor(self, v: int) -> bool:
        return any(
            self.kind(p) is NodeKind.PAIR
            and any(self.kind(j) is NodeKind.JOIN for j in self.children(p))
            for p in self.children(v)
        )

    def join_anchors(self) -> list[int]:
        return [v for v in self.nodes if self.is_join_anchor(v)]

    def iter_paths(
        self, src: int, dst: int, blocked=None, cap: int = DEFAULT_PATH_CAP
    ) -> Iterator[tuple[int, ...]]:
        """Yield simple paths src→dst in lexicographic node-id order.

        ``blocked(v)`` may veto intermediate nodes. Raises PathExplosionError
        once more than ``cap`` paths have been produced.
        """
        count = 0
        path = [src]
        on_path = {src}
        stack = [iter(self.children(src))]
        if src == dst:
            yield (src,)
            return
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt in on_path:
                continue
            if nxt == dst:
                count += 1
                if count > cap:
                    raise PathExplosionError(
                        f"{self.ir_id}: more than {cap} paths from {src} to {dst}"
                    )
                yield tuple(path) + (dst,)
                continue
            if blocked is not None and blocked(nxt):
                continue
            path.append(nxt)
            on_path.add(nxt)
            stack.append(iter(self.children(nxt)))

    def find_all_paths(self, src: int, dst: int, cap: int = DEFAULT_PATH_CAP) -> list[tuple[int, ...]]:
        return list(self.iter_paths(src, dst, cap=cap))

    def reachable_from(self, src: int) -> set[int]:
        seen = {src}
        todo = [src]
        while todo:
            for c in self.children(todo.pop()):
                if c not in seen:
                    seen.add(c)
                    todo.append(c)
        return seen

    def to_dict(self) -> dict:
        return {
            "ir_id": self.ir_id,
            "nodes": [n.to_dict() for n in self.nodes.values()],
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IrGraph":
        if "ir_id" not in d:
            raise IrFormatError("IR graph missing ir_id")
        nodes = [IrNode.from_dict(n) for n in d.get("nodes", [])]
        edges = [IrEdge.from_dict(e) for e in d.get("edges", [])]
        return cls(str(d["ir_id"]), nodes, edges)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "IrGraph":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise IrFormatError(f"bad IR JSON: {e}") from None

    def relabelled(self, mapping: dict[int, int], ir_id: str | None = None) -> "IrGraph":
        """Copy with node ids renamed through ``mapping``."""
        nodes = [
            IrNode(mapping[n.id], n.kind, n.label, n.in_type, n.out_type)
            for n in self.nodes.values()
        ]
        edges = [IrEdge(mapping[e.src], mapping[e.dst], e.flow) for e in self.edges]
        return IrGraph(ir_id or self.ir_id, nodes, edges)


def validate(graph: IrGraph) -> list[Violation]:
    """Return every violated graph invariant; an empty list means valid."""
    out: list[Violation] = []
    nodes = graph.nodes
    if not graph.scans:
        out.append(Violation("S empty"))
    if not graph.writes:
        out.append(Violation("O empty"))

    for e in graph.edges:
        if e.src == e.dst:
            out.append(Violation("self loop", (e.src,)))
        missing = tuple(i for i in (e.src, e.dst) if i not in nodes)
        if missing:
            out.append(Violation("dangling edge", missing))

    if graph.topological_order() is None:
        out.append(Violation("cycle"))

    for i in sorted(graph.scans):
        if graph.parents(i):
            out.append(Violation("scan has parents", (i,)))
        if not nodes[i].label:
            out.append(Violation("scan without dataset", (i,)))
    for i in sorted(graph.writes):
        if graph.children(i):
            out.append(Violation("write has children", (i,)))
        if not nodes[i].label:
            out.append(Violation("write without dataset", (i,)))

    for i, n in nodes.items():
        if n.kind in LABELLED_KINDS and not n.label:
            out.append(Violation("missing label", (i,)))

    by_dataset = defaultdict(list)
    for i in sorted(graph.scans):
        by_dataset[nodes[i].label].append(i)
    for ds, ids in sorted(by_dataset.items()):
        if len(ids) > 1:
            out.append(Violation(f"duplicate scan {ds}", tuple(ids)))

    # every node must sit on some scan -> write path
    fwd = set()
    for s in graph.scans:
        fwd |= graph.reachable_from(s)
    bwd = set(graph.writes)
    todo = list(graph.writes)
    while todo:
        for p in graph.parents(todo.pop()):
            if p not in bwd:
                bwd.add(p)
                todo.append(p)
    stranded = tuple(i for i in nodes if i not in fwd or i not in bwd)
    if stranded:
        out.append(Violation("off scan-write path", stranded))
    return out


def is_valid(graph: IrGraph) -> bool:
    return not validate(graph)


def load_graph(path) -> IrGraph:
    with open(path, encoding="utf-8") as f:
        return IrGraph.from_json(f.read())
