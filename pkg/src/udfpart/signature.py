"""Id-independent signatures for paths, two-terminal subgraphs and workloads.

A path signature spells out each node as ``kind:label:out_type`` and joins
consecutive nodes with the flow marker of the edge between them (``-d>`` for
data, ``-c>`` for control). A subgraph signature is the sorted set of its
root-to-leaf path signatures joined by ``|``. The workload signature hashes the
sorted scan-to-write path signatures with 64-bit FNV-1a.
"""

from __future__ import annotations

from typing import Sequence

from .ir import DEFAULT_PATH_CAP, IrGraph, NodeKind

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1

PATH_SEP = "|"


def fnv1a_64(data: bytes | str) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK
    return h


def hex16(h: int) -> str:
    return f"{h:016x}"


def node_token(graph: IrGraph, v: int) -> str:
    n = graph.nodes[v]
    label = n.label
    if n.kind is NodeKind.OPAQUE_FUNC:
        # opaque UDFs are only comparable by name and signature types
        label = f"{label}({n.in_type})"
    return f"{n.kind.value}:{label}:{n.out_type}"


def path_signature(graph: IrGraph, path: Sequence[int]) -> str:
    parts = [node_token(graph, path[0])]
    for a, b in zip(path, path[1:]):
        parts.append(graph.flow(a, b).marker)
        parts.append(node_token(graph, b))
    return "".join(parts)


def path_signature_set(graph: IrGraph, paths) -> list[str]:
    return sorted({path_signature(graph, p) for p in paths})


def join_signatures(sigs) -> str:
    return PATH_SEP.join(sorted(set(sigs)))


def candidate_path_signatures(dag, cap: int = DEFAULT_PATH_CAP) -> list[str]:
    """Sorted distinct root→leaf path signatures of a two-terminal DAG."""
    return path_signature_set(dag, dag.iter_paths(dag.root, dag.leaf, cap=cap))


def candidate_signature(dag, cap: int = DEFAULT_PATH_CAP) -> str:
    return PATH_SEP.join(candidate_path_signatures(dag, cap=cap))


def workload_paths_signatures(graph: IrGraph, cap: int = DEFAULT_PATH_CAP) -> list[str]:
    sigs = set()
    for s in sorted(graph.scans):
        for w in sorted(graph.writes):
            sigs.update(path_signature(graph, p) for p in graph.iter_paths(s, w, cap=cap))
    return sorted(sigs)


def workload_signature(graph: IrGraph, cap: int = DEFAULT_PATH_CAP) -> int:
    return fnv1a_64(PATH_SEP.join(workload_paths_signatures(graph, cap=cap)))


def longest_path_in_signature(signature: str) -> int:
    """Node count of the longest path encoded in a subgraph signature."""
    if not signature:
        return 0
    return max(p.count("-d>") + p.count("-c>") + 1 for p in signature.split(PATH_SEP))
