"""Recognise an applied partitioning inside a consumer's IR graph.

For every join anchor reachable from the dataset's scan node, the anchored
subgraph is the union of anchor-free paths scan→anchor (the same shape
``candidates.search`` produces). A consumer anchor matches when its sorted
path-signature set equals the applied candidate's and the strategy agrees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .candidates import PartitionerCandidate, Strategy, TwoTerminalDag, anchor_strategies
from .errors import AbsentScanError
from .ir import DEFAULT_PATH_CAP, IrGraph, NodeKind
from .signature import path_signature_set


@dataclass(frozen=True)
class AnchorMatch:
    scan: int
    anchor: int
    subgraph: TwoTerminalDag


def anchored_paths(graph: IrGraph, scan: int, anchor: int, cap: int = DEFAULT_PATH_CAP):
    def blocked(v: int) -> bool:
        return graph.is_join_anchor(v) or graph.kind(v) is NodeKind.WRITE

    return list(graph.iter_paths(scan, anchor, blocked=blocked, cap=cap))


def anchored_subgraph(graph: IrGraph, scan: int, anchor: int) -> TwoTerminalDag | None:
    paths = anchored_paths(graph, scan, anchor)
    return TwoTerminalDag.from_paths(graph, paths) if paths else None


def partitioning_match(
    applied_sigs: Sequence[str],
    strategy: Strategy,
    graph: IrGraph,
    dataset: str,
    anchors: Iterable[int] | None = None,
) -> list[AnchorMatch]:
    """Anchors of ``graph`` whose anchored subgraph carries exactly
    ``applied_sigs`` (sorted) and admits ``strategy``; sorted by anchor id."""
    scan = graph.find_scanner(dataset)
    if scan is None:
        raise AbsentScanError(f"{graph.ir_id} does not read {dataset!r}")
    want = sorted(set(applied_sigs))
    if anchors is None:
        anchors = graph.join_anchors()
    out = []
    for p in sorted(anchors):
        if p == scan:
            continue
        paths = anchored_paths(graph, scan, p)
        if not paths:
            continue
        if path_signature_set(graph, paths) != want:
            continue
        if strategy not in anchor_strategies(graph, p):
            continue
        out.append(AnchorMatch(scan, p, TwoTerminalDag.from_paths(graph, paths)))
    return out


def match_candidate(applied: PartitionerCandidate, graph: IrGraph, anchors=None) -> list[AnchorMatch]:
    return partitioning_match(applied.path_signatures(), applied.strategy, graph, applied.dataset, anchors)


def same_partitioning(sig_a: str, strategy_a, sig_b: str, strategy_b) -> bool:
    """Equality of two key-projection partitionings by signature and strategy."""
    return bool(sig_a) and sig_a == sig_b and Strategy(strategy_a) is Strategy(strategy_b)
