"""End-to-end flows: recommend a partitioning for a dataset about to be
written, reorganise an existing one, and consult an applied partitioning
when a consumer runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .candidates import PartitionerCandidate, candidates_for_graph, enumerate_candidates
from .features import (
    DEFAULT_K,
    CandidateFeatures,
    EnvFeatures,
    FeatureWindow,
    build_state,
    combine_shared,
    complexity,
)
from .history import HistoryStore
from .ir import IrGraph
from .match import anchored_paths, match_candidate, partitioning_match, same_partitioning
from .rl import PolicyModel, act
from .signature import PATH_SEP
from .sim import ClusterConfig, PartitionScheme, SimDataset, Variant


@dataclass
class Recommendation:
    dataset: str
    chosen: PartitionScheme
    distribution: list[float]
    slate: list[tuple[PartitionerCandidate, CandidateFeatures]] = field(default_factory=list)
    action: int = -1
    mode: str = "argmax"

    @property
    def candidate(self) -> PartitionerCandidate | None:
        return self.slate[self.action][0] if 0 <= self.action < len(self.slate) else None

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "chosen": self.chosen.to_dict(),
            "action": self.action,
            "mode": self.mode,
            "distribution": [round(float(p), 12) for p in self.distribution],
            "slate": [
                {
                    "signature": c.signature,
                    "strategy": c.strategy.value,
                    "origin_ir": c.origin_ir,
                    "features": f.to_dict(),
                }
                for c, f in self.slate
            ],
            "candidate": self.candidate.to_dict() if self.candidate else None,
        }


@dataclass
class Advisor:
    store: HistoryStore
    model: PolicyModel
    cluster: ClusterConfig
    datasets: Mapping[str, SimDataset] = field(default_factory=dict)
    k: int = DEFAULT_K
    seed: int = 0

    def env_features(self, dataset: str) -> EnvFeatures:
        size = None
        if dataset in self.datasets:
            size = self.datasets[dataset].total_bytes
        if not size:
            size = self.store.dataset_bytes(dataset)
        c = self.cluster
        return EnvFeatures(float(size or 1.0), c.m, c.cores, c.memory, c.disk)

    def copartitioned(self, graph: IrGraph, dataset: str) -> tuple[int, float]:
        """Other inputs of ``graph`` already partitioned the way ``graph`` wants."""
        n, size = 0, 0.0
        for other in graph.datasets_read():
            if other == dataset or other not in self.datasets:
                continue
            applied = self.datasets[other].applied
            if applied.strategy is None:
                continue
            if any(
                same_partitioning(applied.signature, applied.strategy, c.signature, c.strategy)
                for c in candidates_for_graph(graph, other)
            ):
                n += 1
                size += self.datasets[other].total_bytes
        return n, size

    def features(self, cand: PartitionerCandidate, origin: IrGraph, now: float) -> CandidateFeatures:
        freq, dist, rec = self.store.candidate_stats(origin.ir_id, now)
        ks = self.store.key_stats(origin.ir_id, cand.dataset)
        if ks is None:
            n_obj = self.datasets[cand.dataset].n if cand.dataset in self.datasets else 0
            sel, keys = 1.0, float(n_obj)
        else:
            sel, keys = ks
        n_co, size_co = self.copartitioned(origin, cand.dataset)
        return CandidateFeatures(freq, dist, rec, complexity(cand), sel, keys, n_co, size_co)

    def slate(self, consumers: Sequence[IrGraph], dataset: str, now: float):
        """Deduplicated candidates with features combined over every consumer
        that yields them."""
        cands = enumerate_candidates(consumers, dataset)
        per_key: dict = {}
        for g in consumers:
            for c in candidates_for_graph(g, dataset):
                per_key.setdefault(c.key, []).append(self.features(c, g, now))
        return [(c, combine_shared(per_key[c.key])) for c in cands]

    def _decide(self, consumers: Sequence[IrGraph], dataset: str, mode: str, now: float) -> Recommendation:
        slate = self.slate(consumers, dataset, now)
        rr = PartitionScheme.round_robin()
        if not slate:
            dist = [0.0] * self.k + [1.0]
            return Recommendation(dataset, rr, dist, [], self.k, mode)
        window = FeatureWindow.fit([f for _, f in slate])
        state = build_state(slate, self.env_features(dataset), self.k, window)
        chosen = {c.key: f for c, f in slate}
        ordered = [(c, chosen[c.key]) for c in state.slots]
        mask = np.zeros(self.k + 1, dtype=bool)
        mask[: len(ordered)] = True
        mask[self.k] = True
        rng = np.random.default_rng(self.seed)
        a, p = act(self.model, state.values, rng, mask=mask, greedy=(mode == "argmax"))
        if a < len(ordered):
            c = ordered[a][0]
            scheme = PartitionScheme.keyed(c.signature, c.strategy)
        else:
            scheme = rr
        return Recommendation(dataset, scheme, [float(x) for x in p], ordered, a, mode)

    def recommend(self, producer: IrGraph, dataset: str, mode: str = "argmax", now: float | None = None) -> Recommendation:
        """Predict consumers from history, enumerate their candidates for
        ``dataset`` and let the policy pick one (or round-robin)."""
        if now is None:
            now = self.store.latest_timestamp()
        consumers = self.store.consumer_graphs(producer)
        return self._decide(consumers, dataset, mode, now)

    def reorganize(self, dataset: str, consumers: Sequence[IrGraph], mode: str = "argmax", now: float | None = None) -> Recommendation:
        if not consumers:
            raise ValueError("reorganize needs at least one consumer")
        if now is None:
            now = self.store.latest_timestamp()
        return self._decide(consumers, dataset, mode, now)


@dataclass(frozen=True)
class Verdict:
    anchor: int
    local: bool

    def to_dict(self) -> dict:
        return {"anchor": self.anchor, "verdict": "local" if self.local else "shuffle"}


def consult(
    dataset: str,
    scheme: PartitionScheme,
    consumer: IrGraph,
    candidate: PartitionerCandidate | None = None,
) -> list[Verdict]:
    """Per-join verdicts for ``consumer`` reading ``dataset`` laid out by ``scheme``."""
    from .errors import AbsentScanError

    scan = consumer.find_scanner(dataset)
    if scan is None:
        raise AbsentScanError(f"{consumer.ir_id} does not read {dataset!r}")
    anchors = [p for p in consumer.join_anchors() if p != scan and anchored_paths(consumer, scan, p)]
    if scheme.variant in (Variant.ROUND_ROBIN, Variant.RANDOM):
        return [Verdict(p, False) for p in anchors]
    if candidate is not None:
        hits = match_candidate(candidate, consumer, anchors)
    else:
        hits = partitioning_match(scheme.signature.split(PATH_SEP), scheme.strategy, consumer, dataset, anchors)
    matched = {h.anchor for h in hits}
    return [Verdict(p, p in matched) for p in anchors]
