"""Deterministic cluster simulator used to train and evaluate the selector.

It applies the four partitioning functions (hash, range, round-robin and
random, each folded onto ``m`` nodes by modulus), counts the bytes a
workload would shuffle given the schemes on its inputs, turns that into a
latency with a simple CPU + network + skew model, and replays latency tables
to produce rewards for sampled workload mixtures.
"""

from __future__ import annotations

import bisect
import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .candidates import Strategy
from .errors import MissingTableEntryError, RangeKeyError
from .features import (
    DEFAULT_K,
    CandidateFeatures,
    EnvFeatures,
    FeatureWindow,
    build_state,
    combine_shared,
    state_size,
)
from .match import same_partitioning
from .rl import Observation, Run, reward as throughput_ratio
from .signature import fnv1a_64, hex16, longest_path_in_signature

RANGE_SAMPLE = 10_000


@dataclass(frozen=True)
class ClusterConfig:
    m: int
    cores: int = 8
    memory: float = float(64 << 30)
    disk: float = float(1 << 40)
    bandwidth: float = float(1 << 30)
    base_cpu_rate: float = float(1 << 30)

    def __post_init__(self):
        for k in ("m", "cores", "memory", "disk", "bandwidth", "base_cpu_rate"):
            if not getattr(self, k) > 0:
                raise ValueError(f"cluster {k} must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterConfig":
        return cls(**{k: d[k] for k in ("m", "cores", "memory", "disk", "bandwidth", "base_cpu_rate") if k in d})


class Variant(str, enum.Enum):
    HASH = "Hash"
    RANGE = "Range"
    ROUND_ROBIN = "RoundRobin"
    RANDOM = "Random"


@dataclass(frozen=True)
class PartitionScheme:
    variant: Variant
    signature: str = ""
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.variant in (Variant.HASH, Variant.RANGE) and not self.signature:
            raise ValueError(f"{self.variant.value} scheme needs a candidate signature")

    @classmethod
    def round_robin(cls) -> "PartitionScheme":
        return cls(Variant.ROUND_ROBIN)

    @classmethod
    def keyed(cls, signature: str, strategy: Strategy | str) -> "PartitionScheme":
        return cls(Variant(Strategy(strategy).value), signature)

    @property
    def strategy(self) -> Strategy | None:
        if self.variant in (Variant.HASH, Variant.RANGE):
            return Strategy(self.variant.value)
        return None

    def key(self) -> str:
        """Short canonical form used in latency-table keys."""
        if self.variant is Variant.ROUND_ROBIN:
            return "roundrobin"
        if self.variant is Variant.RANDOM:
            return f"random:{self.seed}"
        return f"{self.variant.value.lower()}:{hex16(fnv1a_64(self.signature))}"

    def to_dict(self) -> dict:
        d = {"variant": self.variant.value}
        if self.signature:
            d["signature"] = self.signature
        if self.variant is Variant.RANDOM:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionScheme":
        return cls(Variant(d["variant"]), d.get("signature", ""), int(d.get("seed", 0)))


@dataclass(frozen=True)
class KeyModel:
    """Either an explicit per-object key list or a Zipf histogram over
    ``distinct`` integer keys (``skew`` 0 means uniform)."""

    keys: tuple | None = None
    distinct: int = 1
    skew: float = 0.0

    def histogram(self, n: int) -> tuple[list, np.ndarray]:
        """(sorted distinct keys, object count per key)."""
        if self.keys is not None:
            uniq: dict = {}
            for k in self.keys[:n]:
                uniq[k] = uniq.get(k, 0) + 1
            ks = list(uniq)
            try:
                ks.sort()
            except TypeError:
                pass
            return ks, np.array([uniq[k] for k in ks], dtype=np.int64)
        d = max(1, min(self.distinct, n)) if n else 1
        w = 1.0 / np.arange(1, d + 1, dtype=float) ** self.skew
        exact = n * w / w.sum()
        counts = np.floor(exact).astype(np.int64)
        short = n - int(counts.sum())
        if short:
            # largest remainders, ties to lower key
            order = np.lexsort((np.arange(d), -(exact - counts)))
            counts[order[:short]] += 1
        return list(range(d)), counts

    def object_keys(self, n: int) -> list:
        if self.keys is not None:
            return list(self.keys[:n])
        ks, counts = self.histogram(n)
        return [k for k, c in zip(ks, counts.tolist()) for _ in range(c)]


@dataclass(frozen=True)
class SimDataset:
    id: str
    n: int
    object_bytes: float
    key_model: KeyModel = field(default_factory=KeyModel)
    applied: PartitionScheme = field(default_factory=PartitionScheme.round_robin)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("object count must be non-negative")
        if self.key_model.keys is None and self.key_model.distinct > max(self.n, 1):
            raise ValueError(f"{self.id}: more distinct keys than objects")

    @property
    def total_bytes(self) -> float:
        return self.n * self.object_bytes

    @classmethod
    def from_dict(cls, d: dict) -> "SimDataset":
        km = KeyModel(
            tuple(d["keys"]) if "keys" in d else None,
            int(d.get("distinct_keys", 1)),
            float(d.get("skew", 0.0)),
        )
        applied = PartitionScheme.from_dict(d["applied"]) if "applied" in d else PartitionScheme.round_robin()
        return cls(d["id"], int(d["n"]), float(d["object_bytes"]), km, applied)


def _hash_node(key, m: int) -> int:
    return fnv1a_64(repr(key)) % m


def range_boundaries(keys: list, counts: np.ndarray, m: int, seed: int = 0) -> list:
    """Equi-depth bucket boundaries over a key sample (or all keys if fewer
    than RANGE_SAMPLE objects)."""
    n = int(counts.sum())
    if n == 0 or m == 1:
        return []
    if n <= RANGE_SAMPLE:
        sample_idx = np.repeat(np.arange(len(keys)), counts)
    else:
        rng = np.random.default_rng(seed)
        sample_idx = np.sort(rng.choice(len(keys), size=RANGE_SAMPLE, p=counts / n))
    sample = [keys[i] for i in sample_idx]
    return [sample[(j * len(sample)) // m] for j in range(1, m)]


def range_bucket(boundaries: list, key) -> int:
    # bucket j covers [b_{j-1}, b_j): equal keys go to the right-hand bucket
    return bisect.bisect_right(boundaries, key)


def _check_orderable(keys: list) -> None:
    try:
        sorted(keys)
    except TypeError:
        raise RangeKeyError("range partitioning needs mutually comparable keys") from None


def assign(dataset: SimDataset, scheme: PartitionScheme, cluster: ClusterConfig) -> np.ndarray:
    """Node index for every object of ``dataset``."""
    m, n = cluster.m, dataset.n
    v = scheme.variant
    if v is Variant.ROUND_ROBIN:
        return np.arange(n, dtype=np.int64) % m
    if v is Variant.RANDOM:
        return np.random.default_rng(scheme.seed).integers(0, m, size=n)
    keys = dataset.key_model.object_keys(n)
    if v is Variant.HASH:
        memo: dict = {}
        out = np.empty(n, dtype=np.int64)
        for i, k in enumerate(keys):
            if k not in memo:
                memo[k] = _hash_node(k, m)
            out[i] = memo[k]
        return out
    _check_orderable(keys)
    ks, counts = dataset.key_model.histogram(n)
    bounds = range_boundaries(ks, counts, m)
    return np.array([range_bucket(bounds, k) % m for k in keys], dtype=np.int64)


def node_loads(dataset: SimDataset, scheme: PartitionScheme, cluster: ClusterConfig) -> np.ndarray:
    """Bytes stored per node; computed from the key histogram, not per object."""
    m, n = cluster.m, dataset.n
    v = scheme.variant
    counts = np.zeros(m)
    if v is Variant.ROUND_ROBIN:
        counts[:] = n // m
        counts[: n % m] += 1
    elif v is Variant.RANDOM:
        counts = np.bincount(assign(dataset, scheme, cluster), minlength=m).astype(float)
    else:
        ks, kc = dataset.key_model.histogram(n)
        if v is Variant.HASH:
            nodes = [_hash_node(k, m) for k in ks]
        else:
            _check_orderable(ks)
            bounds = range_boundaries(ks, kc, m)
            nodes = [range_bucket(bounds, k) % m for k in ks]
        np.add.at(counts, nodes, kc)
    return counts * dataset.object_bytes


@dataclass
class WorkloadSpec:
    query_id: str
    ir_id: str
    inputs: tuple[str, ...]
    desired: dict = field(default_factory=dict)  # dataset -> (signature, Strategy)
    latency_table: dict = field(default_factory=dict)
    frequency: float = 1.0
    inclusion: float = 1.0
    distance: float = 0.0
    recency: float = 0.0
    selectivity: dict = field(default_factory=dict)
    distinct_keys: dict = field(default_factory=dict)

    def desired_scheme(self, dataset: str) -> PartitionScheme | None:
        if dataset not in self.desired:
            return None
        s, strat = self.desired[dataset]
        return PartitionScheme.keyed(s, strat)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "ir_id": self.ir_id,
            "inputs": list(self.inputs),
            "desired": {d: {"signature": s, "strategy": Strategy(st).value} for d, (s, st) in sorted(self.desired.items())},
            "latency_table": dict(sorted(self.latency_table.items())),
            "frequency": self.frequency,
            "inclusion": self.inclusion,
            "distance": self.distance,
            "recency": self.recency,
            "selectivity": self.selectivity,
            "distinct_keys": self.distinct_keys,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        return cls(
            query_id=d["query_id"],
            ir_id=d.get("ir_id", d["query_id"]),
            inputs=tuple(d["inputs"]),
            desired={k: (v["signature"], Strategy(v.get("strategy", "Hash"))) for k, v in d.get("desired", {}).items()},
            latency_table={k: float(v) for k, v in d.get("latency_table", {}).items()},
            frequency=float(d.get("frequency", 1.0)),
            inclusion=float(d.get("inclusion", 1.0)),
            distance=float(d.get("distance", 0.0)),
            recency=float(d.get("recency", 0.0)),
            selectivity={k: float(v) for k, v in d.get("selectivity", {}).items()},
            distinct_keys={k: float(v) for k, v in d.get("distinct_keys", {}).items()},
        )


def _matches(spec: WorkloadSpec, dataset: str, scheme: PartitionScheme) -> bool:
    if dataset not in spec.desired or scheme.strategy is None:
        return False
    s, strat = spec.desired[dataset]
    return same_partitioning(scheme.signature, scheme.strategy, s, strat)


def shuffle_bytes(
    workload: WorkloadSpec,
    schemes: Mapping[str, PartitionScheme],
    cluster: ClusterConfig,
    datasets: Mapping[str, SimDataset],
) -> dict[str, float]:
    out = {}
    for d in workload.inputs:
        total = datasets[d].total_bytes
        out[d] = 0.0 if _matches(workload, d, schemes[d]) else total - total / cluster.m
    return out


def skew_factor(loads: np.ndarray) -> float:
    mean = loads.mean()
    return float(loads.max() / mean) if mean > 0 else 1.0


def simulate_latency(
    workload: WorkloadSpec,
    schemes: Mapping[str, PartitionScheme],
    cluster: ClusterConfig,
    datasets: Mapping[str, SimDataset],
) -> float:
    """(input bytes / cpu rate + shuffled bytes / bandwidth) x skew factor."""
    cpu = math.fsum(datasets[d].total_bytes for d in workload.inputs) / cluster.base_cpu_rate
    net = math.fsum(shuffle_bytes(workload, schemes, cluster, datasets).values()) / cluster.bandwidth
    loads = sum((node_loads(datasets[d], schemes[d], cluster) for d in workload.inputs), np.zeros(cluster.m))
    return (cpu + net) * skew_factor(loads)


def table_key(schemes: Mapping[str, PartitionScheme], inputs: Sequence[str]) -> str:
    return ";".join(f"{d}={schemes[d].key()}" for d in sorted(inputs))


def scheme_options(specs: Sequence[WorkloadSpec], dataset: str) -> list[PartitionScheme]:
    """Round-robin plus every scheme some workload desires for ``dataset``."""
    opts = {PartitionScheme.round_robin()}
    for s in specs:
        sch = s.desired_scheme(dataset)
        if sch is not None:
            opts.add(sch)
    return sorted(opts, key=lambda s: s.key())


def build_latency_table(
    workload: WorkloadSpec,
    specs: Sequence[WorkloadSpec],
    cluster: ClusterConfig,
    datasets: Mapping[str, SimDataset],
) -> dict[str, float]:
    """Simulated latency for every combination of input schemes."""
    inputs = sorted(workload.inputs)
    options = [scheme_options(specs, d) for d in inputs]
    table = {}
    for combo in itertools.product(*options):
        schemes = dict(zip(inputs, combo))
        table[table_key(schemes, inputs)] = simulate_latency(workload, schemes, cluster, datasets)
    return table


@dataclass(frozen=True)
class Mixture:
    entries: tuple  # (WorkloadSpec, frequency) pairs, frequencies sum to 1

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def query_ids(self) -> list[str]:
        return [s.query_id for s, _ in self.entries]


def sample_workload(specs: Sequence[WorkloadSpec], rng: np.random.Generator) -> Mixture:
    """Random subset (each spec kept with its ``inclusion`` probability) with
    random weights scaled by each spec's ``frequency``. May be empty."""
    if not specs:
        raise ValueError("no workload specs to sample from")
    chosen = []
    for s in specs:
        keep = rng.random() < s.inclusion
        w = rng.uniform(0.5, 1.5) * s.frequency
        if keep:
            chosen.append((s, w))
    total = math.fsum(w for _, w in chosen)
    return Mixture(tuple((s, w / total) for s, w in chosen))


def _lookup(spec: WorkloadSpec, schemes: Mapping[str, PartitionScheme]) -> float:
    k = table_key(schemes, spec.inputs)
    try:
        return spec.latency_table[k]
    except KeyError:
        raise MissingTableEntryError(f"{spec.query_id}: no latency for {k}") from None


def replay_reward(
    mixture: Mixture,
    schemes: Mapping[str, PartitionScheme],
    datasets: Mapping[str, SimDataset],
) -> float:
    """Frequency-weighted throughput under ``schemes`` relative to all inputs
    round-robin, from the workloads' latency tables."""
    rr = PartitionScheme.round_robin()
    now, base = [], []
    for spec, f in mixture.entries:
        size = f * math.fsum(datasets[d].total_bytes for d in spec.inputs)
        now.append(Run(size, f * _lookup(spec, schemes)))
        base.append(Run(size, f * _lookup(spec, {d: rr for d in spec.inputs})))
    return throughput_ratio(now, base)


@dataclass
class SimEnvironment:
    """Training environment: each observation samples a workload mixture,
    picks a dataset to (re)partition and lays out its candidate slate."""

    cluster: ClusterConfig
    datasets: dict[str, SimDataset]
    workloads: list[WorkloadSpec]
    k: int = DEFAULT_K

    def __post_init__(self):
        for w in self.workloads:
            if not w.latency_table:
                w.latency_table = build_latency_table(w, self.workloads, self.cluster, self.datasets)
        # mixture frequencies live in [0, 1]; bracket the window with both ends
        seen = []
        for spec in self.workloads:
            for d in spec.desired:
                seen += [self._query_features(spec, d, 0.0), self._query_features(spec, d, 1.0)]
        self.window = FeatureWindow.fit(seen)

    @property
    def state_size(self) -> int:
        return state_size(self.k)

    @property
    def n_actions(self) -> int:
        return self.k + 1

    def env_features(self, dataset: str) -> EnvFeatures:
        c = self.cluster
        return EnvFeatures(max(self.datasets[dataset].total_bytes, 1.0), c.m, c.cores, c.memory, c.disk)

    def _query_features(self, spec: WorkloadSpec, dataset: str, freq: float) -> CandidateFeatures:
        sig, _ = spec.desired[dataset]
        n_co, size_co = self._copartitioned(spec, dataset)
        return CandidateFeatures(
            frequency=freq,
            distance=spec.distance,
            recency=spec.recency,
            complexity=longest_path_in_signature(sig),
            selectivity=spec.selectivity.get(dataset, 1.0),
            key_distribution=spec.distinct_keys.get(dataset, float(self.datasets[dataset].n)),
            num_copartitioned=n_co,
            size_copartitioned=size_co,
        )

    def _copartitioned(self, spec: WorkloadSpec, dataset: str) -> tuple[int, float]:
        n, size = 0, 0.0
        for other in spec.inputs:
            if other != dataset and _matches(spec, other, self.datasets[other].applied):
                n += 1
                size += self.datasets[other].total_bytes
        return n, size

    def slate(self, mixture: Mixture, dataset: str):
        """Candidates for ``dataset`` with their combined features."""
        per = {}
        for spec, f in mixture.entries:
            sch = spec.desired_scheme(dataset)
            if sch is not None:
                per.setdefault(sch, []).append(self._query_features(spec, dataset, f))
        return [(sch, combine_shared(fs)) for sch, fs in sorted(per.items(), key=lambda kv: kv[0].key())]

    def observe(self, rng: np.random.Generator) -> Observation:
        while True:
            mix = sample_workload(self.workloads, rng)
            targets = sorted({d for s, _ in mix.entries for d in s.desired})
            if targets:
                break
        dataset = targets[int(rng.integers(len(targets)))]
        slate = self.slate(mix, dataset)
        state = build_state(
            [(_SlateEntry(s), f) for s, f in slate], self.env_features(dataset), self.k, self.window
        )
        return Observation(state.values, (mix, dataset, [e.scheme for e in state.slots]))

    def decode(self, obs: Observation, action: int) -> PartitionScheme:
        _, _, slots = obs.context
        return slots[action] if action < len(slots) else PartitionScheme.round_robin()

    def reward(self, obs: Observation, action: int) -> float:
        mix, dataset, _ = obs.context
        schemes = {d: ds.applied for d, ds in self.datasets.items()}
        schemes[dataset] = self.decode(obs, action)
        return replay_reward(mix, schemes, self.datasets)

    @classmethod
    def from_dict(cls, d: dict) -> "SimEnvironment":
        from .candidates import candidates_for_graph
        from .ir import IrGraph

        irs = {g["ir_id"]: IrGraph.from_dict(g) for g in d.get("irs", [])}
        workloads = []
        for w in d.get("workloads", []):
            spec = WorkloadSpec.from_dict(w)
            if not spec.desired and spec.ir_id in irs:
                for ds in spec.inputs:
                    cands = candidates_for_graph(irs[spec.ir_id], ds)
                    if cands:
                        spec.desired[ds] = (cands[0].signature, cands[0].strategy)
            workloads.append(spec)
        return cls(
            ClusterConfig.from_dict(d["cluster"]),
            {x["id"]: SimDataset.from_dict(x) for x in d.get("datasets", [])},
            workloads,
            int(d.get("k", DEFAULT_K)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SimEnvironment":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class _SlateEntry:
    """Adapter so a scheme can be ranked like a candidate."""

    scheme: PartitionScheme

    @property
    def signature(self) -> str:
        return self.scheme.signature

    @property
    def strategy(self) -> Strategy:
        return self.scheme.strategy
