"""Execution history: the durable run log, the low-level workflow graph and
its condensation into a skeleton graph keyed by workload signature.

Low-level nodes are executions ``(app_id, timestamp)``. An edge links a run
that wrote a dataset to every other run that read it. The skeleton graph
merges executions whose IR graphs share a workload signature; its edges carry
the runs that crossed them as ``(app_id, timestamp, input_data_id,
output_data_id)`` tuples taken from the consuming run.
"""

from __future__ import annotations

import json
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import UnknownIrError
from .ir import IrGraph, load_graph
from .signature import hex16, workload_signature

DEFAULT_WINDOW = 30 * 86_400.0


@dataclass(frozen=True)
class KeyStats:
    """Optional per-run statistics about one input dataset's join key."""

    dataset: str
    selectivity: float = 1.0
    distinct_keys: float = 0.0


@dataclass(frozen=True)
class ExecutionRecord:
    app_id: str
    timestamp: float
    ir_id: str
    inputs: tuple = ()
    outputs: tuple = ()
    latency: float = 1.0
    key_stats: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "latency", float(self.latency))
        object.__setattr__(self, "inputs", tuple((str(d), int(b)) for d, b in self.inputs))
        object.__setattr__(self, "outputs", tuple((str(d), int(b)) for d, b in self.outputs))
        object.__setattr__(self, "key_stats", tuple(self.key_stats))
        if not self.latency > 0:
            raise ValueError(f"{self.app_id}: latency must be positive")
        if any(b < 0 for _, b in self.inputs + self.outputs):
            raise ValueError(f"{self.app_id}: negative byte count")

    @property
    def run_id(self) -> tuple[str, float]:
        return (self.app_id, self.timestamp)

    @property
    def input_bytes(self) -> int:
        return sum(b for _, b in self.inputs)

    def to_dict(self) -> dict:
        d = {
            "app_id": self.app_id,
            "timestamp": self.timestamp,
            "ir_id": self.ir_id,
            "inputs": [{"dataset": ds, "bytes": b} for ds, b in self.inputs],
            "outputs": [{"dataset": ds, "bytes": b} for ds, b in self.outputs],
            "latency": self.latency,
        }
        if self.key_stats:
            d["key_stats"] = [
                {"dataset": k.dataset, "selectivity": k.selectivity, "distinct_keys": k.distinct_keys}
                for k in self.key_stats
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionRecord":
        return cls(
            app_id=str(d["app_id"]),
            timestamp=float(d["timestamp"]),
            ir_id=str(d["ir_id"]),
            inputs=tuple((x["dataset"], x["bytes"]) for x in d.get("inputs", [])),
            outputs=tuple((x["dataset"], x["bytes"]) for x in d.get("outputs", [])),
            latency=float(d["latency"]),
            key_stats=tuple(
                KeyStats(k["dataset"], float(k.get("selectivity", 1.0)), float(k.get("distinct_keys", 0.0)))
                for k in d.get("key_stats", [])
            ),
        )


def _run_key(r: ExecutionRecord):
    return (r.timestamp, r.app_id, r.ir_id, r.inputs, r.outputs, r.latency)


@dataclass(frozen=True)
class SkeletonGroup:
    signature: int
    ir_ids: tuple[str, ...]
    runs: tuple[ExecutionRecord, ...]

    @property
    def representative(self) -> str:
        return self.ir_ids[0]

    @property
    def timestamps(self) -> list[float]:
        return [r.timestamp for r in self.runs]


@dataclass(frozen=True)
class Skeleton:
    """Immutable snapshot of the condensed workflow graph."""

    groups: Mapping[int, SkeletonGroup] = field(default_factory=dict)
    edges: Mapping[tuple[int, int], tuple] = field(default_factory=dict)
    ir_group: Mapping[str, int] = field(default_factory=dict)

    def successors(self, g: int) -> list[int]:
        return sorted(dst for (src, dst) in self.edges if src == g)

    def to_dict(self) -> dict:
        return {
            "groups": [
                {
                    "signature": hex16(s),
                    "representative": g.representative,
                    "ir_ids": list(g.ir_ids),
                    "runs": [[r.app_id, r.timestamp] for r in g.runs],
                }
                for s, g in sorted(self.groups.items())
            ],
            "edges": [
                {"src": hex16(a), "dst": hex16(b), "runs": [list(x) for x in runs]}
                for (a, b), runs in sorted(self.edges.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def condense(records: Iterable[ExecutionRecord], signatures: Mapping[str, int]) -> Skeleton:
    """Build the skeleton graph from scratch. Order of ``records`` is irrelevant."""
    runs = sorted(records, key=_run_key)
    members = defaultdict(list)
    ir_ids = defaultdict(set)
    for r in runs:
        s = signatures[r.ir_id]
        members[s].append(r)
        ir_ids[s].add(r.ir_id)
    producers = defaultdict(list)
    for r in runs:
        for ds, _ in r.outputs:
            producers[ds].append(r)
    edges = defaultdict(set)
    for r in runs:
        outs = ",".join(sorted(ds for ds, _ in r.outputs))
        for ds, _ in r.inputs:
            for p in producers.get(ds, ()):
                if p == r:
                    continue
                edges[(signatures[p.ir_id], signatures[r.ir_id])].add((r.app_id, r.timestamp, ds, outs))
    groups = {
        s: SkeletonGroup(s, tuple(sorted(ir_ids[s])), tuple(members[s])) for s in members
    }
    ir_group = {ir: s for s, g in groups.items() for ir in g.ir_ids}
    return Skeleton(
        MappingProxyType(groups),
        MappingProxyType({k: tuple(sorted(v)) for k, v in edges.items()}),
        MappingProxyType(ir_group),
    )


class HistoryStore:
    """Registered IR graphs plus the run log, with a skeleton snapshot that is
    swapped atomically after every ingest.

    When ``root`` is given the store is file-backed: ``root/irs/<ir_id>.json``
    holds registered graphs and ``root/log.jsonl`` the append-only run log.
    """

    def __init__(self, root: str | Path | None = None, window: float = DEFAULT_WINDOW):
        self.root = Path(root) if root is not None else None
        self.window = window
        self.graphs: dict[str, IrGraph] = {}
        self.signatures: dict[str, int] = {}
        self.records: list[ExecutionRecord] = []
        self._lock = threading.Lock()
        self._snapshot = Skeleton()
        if self.root is not None:
            self._load()

    @property
    def log_path(self) -> Path | None:
        return self.root / "log.jsonl" if self.root else None

    def _load(self) -> None:
        irs = self.root / "irs"
        if irs.is_dir():
            for p in sorted(irs.glob("*.json")):
                g = load_graph(p)
                self.graphs[g.ir_id] = g
                self.signatures[g.ir_id] = workload_signature(g)
        if self.log_path.exists():
            with open(self.log_path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        self.records.append(ExecutionRecord.from_dict(json.loads(line)))
        self._snapshot = condense(self.records, self.signatures)

    def register(self, graph: IrGraph) -> int:
        with self._lock:
            self.graphs[graph.ir_id] = graph
            s = self.signatures[graph.ir_id] = workload_signature(graph)
            if self.root is not None:
                d = self.root / "irs"
                d.mkdir(parents=True, exist_ok=True)
                (d / f"{graph.ir_id}.json").write_text(graph.to_json(), encoding="utf-8")
            return s

    def ingest(self, record: ExecutionRecord) -> None:
        with self._lock:
            if record.ir_id not in self.graphs:
                raise UnknownIrError(f"unregistered ir_id {record.ir_id!r}")
            if self.root is not None:
                self.root.mkdir(parents=True, exist_ok=True)
                with open(self.log_path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            self.records.append(record)
            self._snapshot = condense(self.records, self.signatures)

    def ingest_many(self, records: Iterable[ExecutionRecord]) -> int:
        n = 0
        for r in records:
            self.ingest(r)
            n += 1
        return n

    @property
    def skeleton(self) -> Skeleton:
        return self._snapshot

    def group_of(self, ir_id: str) -> SkeletonGroup | None:
        snap = self._snapshot
        s = snap.ir_group.get(ir_id)
        return snap.groups.get(s) if s is not None else None

    def predict_consumers(self, producer: IrGraph) -> list[tuple[str, tuple[ExecutionRecord, ...]]]:
        """Groups one skeleton edge downstream of the producer's group."""
        snap = self._snapshot
        s = workload_signature(producer)
        if s not in snap.groups:
            return []
        return [(snap.groups[d].representative, snap.groups[d].runs) for d in snap.successors(s)]

    def consumer_graphs(self, producer: IrGraph) -> list[IrGraph]:
        return [self.graphs[ir] for ir, _ in self.predict_consumers(producer)]

    def candidate_stats(self, origin_ir: str, now: float) -> tuple[int, float, float]:
        """(frequency, distance, recency) of the group owning ``origin_ir``."""
        g = self.group_of(origin_ir)
        ts = sorted(g.timestamps) if g else []
        if not ts:
            return 0, 0.0, self.window
        distance = ts[-1] - ts[-2] if len(ts) > 1 else 0.0
        return len(ts), float(distance), float(now - ts[-1])

    def key_stats(self, origin_ir: str, dataset: str) -> tuple[float, float] | None:
        """Mean (selectivity, distinct keys) over the group's runs, if logged."""
        g = self.group_of(origin_ir)
        if g is None:
            return None
        sel, keys = [], []
        for r in g.runs:
            for k in r.key_stats:
                if k.dataset == dataset:
                    sel.append(k.selectivity)
                    keys.append(k.distinct_keys)
        if not sel:
            return None
        return math.fsum(sel) / len(sel), math.fsum(keys) / len(keys)

    def latest_timestamp(self) -> float:
        return max((r.timestamp for r in self.records), default=0.0)

    def dataset_bytes(self, dataset: str) -> int | None:
        """Latest logged size of a dataset, from outputs or inputs."""
        best = None
        for r in sorted(self.records, key=_run_key):
            for ds, b in r.outputs + r.inputs:
                if ds == dataset:
                    best = b
        return best


def read_log(path: str | Path) -> list[ExecutionRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(ExecutionRecord.from_dict(json.loads(line)))
    return out


@dataclass(frozen=True)
class Decision:
    """A partitioning applied to ``dataset`` at ``timestamp``."""

    decision_id: str
    timestamp: float
    dataset: str


def attribute_runs(
    records: Iterable[ExecutionRecord], decisions: Iterable[Decision]
) -> dict[str, list[ExecutionRecord]]:
    """Reward window of each decision: the runs whose most recent earlier
    decision on any of their inputs is that one. Runs preceded by no decision
    on their inputs are left out. Equal timestamps break on decision id."""
    by_ds: dict[str, list[Decision]] = defaultdict(list)
    for d in decisions:
        by_ds[d.dataset].append(d)
    out: dict[str, list[ExecutionRecord]] = {d.decision_id: [] for ds in by_ds.values() for d in ds}
    for r in sorted(records, key=_run_key):
        prior = [d for ds, _ in r.inputs for d in by_ds.get(ds, ()) if d.timestamp <= r.timestamp]
        if prior:
            last = max(prior, key=lambda d: (d.timestamp, d.decision_id))
            out[last.decision_id].append(r)
    return out
