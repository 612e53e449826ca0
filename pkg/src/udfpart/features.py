"""Candidate features, state vectors and feature/reward correlation."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .candidates import PartitionerCandidate, TwoTerminalDag
from .errors import DegenerateVarianceError

FEATURE_NAMES = (
    "frequency",
    "distance",
    "recency",
    "complexity",
    "selectivity",
    "key_distribution",
    "num_copartitioned",
    "size_copartitioned",
)
N_FEATURES = len(FEATURE_NAMES)
ENV_NAMES = ("dataset_bytes", "workers", "cores", "memory", "disk")
N_ENV = len(ENV_NAMES)
DEFAULT_K = 3


@dataclass(frozen=True)
class CandidateFeatures:
    frequency: float = 0.0
    distance: float = 0.0
    recency: float = 0.0
    complexity: float = 0.0
    selectivity: float = 1.0
    key_distribution: float = 0.0
    num_copartitioned: float = 0.0
    size_copartitioned: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0 or math.isnan(v):
                raise ValueError(f"{f.name} must be non-negative, got {v}")
        if self.selectivity > 1.0:
            object.__setattr__(self, "selectivity", 1.0)

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def to_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, astuple(self)))


def complexity(dag: TwoTerminalDag | PartitionerCandidate) -> int:
    """Node count of the longest root→leaf path (DP over topological order)."""
    if isinstance(dag, PartitionerCandidate):
        dag = dag.subgraph
    longest = {dag.root: 1}
    for v in dag.topological_order():
        if v not in longest:
            continue
        for c in dag.children(v):
            longest[c] = max(longest.get(c, 0), longest[v] + 1)
    return longest.get(dag.leaf, 0)


def combine_shared(per_query: Sequence[CandidateFeatures]) -> CandidateFeatures:
    """Merge one candidate's statistics from several queries that use it.

    distance, frequency and recency are averaged; selectivity takes the max
    and the distinct-key count the min, favouring candidates for stages that
    move a lot of data and penalising keys that collapse into few buckets.
    """
    if not per_query:
        raise ValueError("need at least one query")
    first = per_query[0]
    if len(per_query) == 1:
        return first
    n = len(per_query)
    return replace(
        first,
        frequency=math.fsum(q.frequency for q in per_query) / n,
        distance=math.fsum(q.distance for q in per_query) / n,
        recency=math.fsum(q.recency for q in per_query) / n,
        selectivity=max(q.selectivity for q in per_query),
        key_distribution=min(q.key_distribution for q in per_query),
    )


@dataclass(frozen=True)
class EnvFeatures:
    dataset_bytes: float
    workers: float
    cores: float
    memory: float
    disk: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


# Reference scale for the environment block; values above it clip to 1.
ENV_SCALE = EnvFeatures(
    dataset_bytes=float(1 << 40), workers=64.0, cores=64.0, memory=float(1 << 40), disk=float(16 << 40)
)


@dataclass(frozen=True)
class FeatureWindow:
    """Per-feature min/max observed over the history window."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @classmethod
    def fit(cls, feats: Sequence[CandidateFeatures]) -> "FeatureWindow":
        if not feats:
            return cls((0.0,) * N_FEATURES, (0.0,) * N_FEATURES)
        arr = np.stack([f.as_array() for f in feats])
        return cls(tuple(arr.min(axis=0)), tuple(arr.max(axis=0)))

    def normalize(self, f: CandidateFeatures) -> np.ndarray:
        x = f.as_array()
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        span = hi - lo
        out = np.full(N_FEATURES, 0.5)
        ok = span > 0
        out[ok] = (x[ok] - lo[ok]) / span[ok]
        return np.clip(out, 0.0, 1.0)


def rank_key(c: PartitionerCandidate, f: CandidateFeatures):
    return (-f.frequency, -f.num_copartitioned, f.recency, c.signature, c.strategy.value)


def select_top_k(
    cands: Sequence[tuple[PartitionerCandidate, CandidateFeatures]], k: int
) -> list[tuple[PartitionerCandidate, CandidateFeatures]]:
    return sorted(cands, key=lambda cf: rank_key(*cf))[:k]


@dataclass(frozen=True)
class StateVector:
    values: np.ndarray
    slots: tuple  # candidate occupying each filled slot, in slot order
    k: int

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n_actions(self) -> int:
        return self.k + 1

    @property
    def round_robin_action(self) -> int:
        return self.k


def state_size(k: int) -> int:
    return k * N_FEATURES + N_ENV


def build_state(
    cands: Sequence[tuple[PartitionerCandidate, CandidateFeatures]],
    env: EnvFeatures,
    k: int = DEFAULT_K,
    window: FeatureWindow | None = None,
    env_scale: EnvFeatures = ENV_SCALE,
) -> StateVector:
    """Top-k candidate blocks followed by the environment block.

    Without an explicit window, min/max come from all supplied candidates.
    Unused slots stay zero. The last action index is always round-robin.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if any(v <= 0 for v in astuple(env)):
        raise ValueError("environment features must be positive")
    if window is None:
        window = FeatureWindow.fit([f for _, f in cands])
    top = select_top_k(cands, k)
    vec = np.zeros(state_size(k))
    for i, (_, f) in enumerate(top):
        vec[i * N_FEATURES:(i + 1) * N_FEATURES] = window.normalize(f)
    vec[k * N_FEATURES:] = np.clip(env.as_array() / env_scale.as_array(), 0.0, 1.0)
    return StateVector(vec, tuple(c for c, _ in top), k)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation, accumulated in exact rational arithmetic.

    The only rounding happens in the final square root, so perfectly linear
    float series come out as exactly +-1.0.
    """
    if len(xs) != len(ys):
        raise ValueError("series lengths differ")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two points")
    fx = [Fraction(float(x)) for x in xs]
    fy = [Fraction(float(y)) for y in ys]
    mx = sum(fx) / n
    my = sum(fy) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(fx, fy))
    sxx = sum((a - mx) ** 2 for a in fx)
    syy = sum((b - my) ** 2 for b in fy)
    if sxx == 0 or syy == 0:
        raise DegenerateVarianceError("zero variance")
    r2 = sxy * sxy / (sxx * syy)
    return math.copysign(math.sqrt(float(r2)), float(sxy))
