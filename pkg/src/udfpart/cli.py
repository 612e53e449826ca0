"""Command-line entry point. JSON (or CSV where noted) goes to stdout, logs to
stderr. Exit status: 0 success, 1 domain error, 2 usage error."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rl
from .advisor import Advisor, consult
from .candidates import PartitionerCandidate, enumerate_candidates
from .errors import AdvisorError, DegenerateVarianceError
from .features import DEFAULT_K, FEATURE_NAMES, pearson
from .fixtures import reddit_env_spec, reddit_history
from .history import DEFAULT_WINDOW, HistoryStore, read_log
from .ir import load_graph, validate
from .sim import PartitionScheme, SimEnvironment, shuffle_bytes, simulate_latency

CONFIG_ENV = "LACHESIS_CONFIG"
log = logging.getLogger("udfpart")


@dataclass
class Config:
    history: str | None = None
    model: str | None = None
    env: str | None = None
    k: int = DEFAULT_K
    alpha: float = 1e-3
    beta: float = 0.01
    gamma: float = 0.9
    batch: int = rl.BATCH_SIZE
    epochs: int = 100
    agents: int = 1
    seed: int = 0
    window: float = DEFAULT_WINDOW

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.batch < 1 or self.agents < 1 or self.epochs < 0:
            raise ValueError("batch and agents must be >= 1, epochs >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def resolve(cls, args: argparse.Namespace) -> "Config":
        """Defaults, then the config file (``--config`` or $LACHESIS_CONFIG),
        then explicit flags."""
        base: dict = {}
        path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
        if path:
            base = json.loads(Path(path).read_text(encoding="utf-8"))
        for f in fields(cls):
            v = getattr(args, f.name, None)
            if v is not None:
                base[f.name] = v
        return cls.from_dict(base)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _need(value, flag: str):
    if value is None:
        raise ValueError(f"{flag} is required (flag or config)")
    return value


def _load_ir(path: str):
    g = load_graph(path)
    bad = validate(g)
    if bad:
        raise ValueError(f"{path}: invalid IR graph: " + "; ".join(f"{v.code} {list(v.ids)}" for v in bad))
    return g


def _read_jsonl(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# -- subcommands --------------------------------------------------------------


def cmd_ingest(args, cfg: Config) -> int:
    store = HistoryStore(_need(cfg.history, "--history"), cfg.window)
    for p in args.ir or []:
        store.register(_load_ir(p))
    n = store.ingest_many(read_log(args.log)) if args.log else 0
    log.info("ingested %d records", n)
    _emit({"ingested": n, "graphs": len(store.graphs), "groups": len(store.skeleton.groups)})
    return 0


def cmd_enumerate(args, cfg: Config) -> int:
    graphs = [_load_ir(p) for p in args.ir]
    _emit([c.to_dict() for c in enumerate_candidates(graphs, args.dataset)])
    return 0


def _decision_rows(path: str) -> tuple[list[dict], list[float]]:
    feats, rewards = [], []
    for d in _read_jsonl(path):
        feats.append(d["features"])
        rewards.append(float(d["reward"]))
    return feats, rewards


def _pcc_csv(feats: list[dict], rewards: list[float], names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "reward", "pcc"])
    mean_r = math.fsum(rewards) / len(rewards) if rewards else float("nan")
    for name in names:
        xs = [float(f[name]) for f in feats]
        try:
            r = repr(pearson(xs, rewards))
        except (DegenerateVarianceError, ValueError):
            r = "nan"
        w.writerow([name, repr(mean_r), r])
    return buf.getvalue()


def cmd_stats(args, cfg: Config) -> int:
    feats, rewards = _decision_rows(args.log)
    sys.stdout.write(_pcc_csv(feats, rewards, FEATURE_NAMES))
    return 0


def cmd_pcc(args, cfg: Config) -> int:
    feats, rewards = _decision_rows(args.log)
    names = args.feature or list(FEATURE_NAMES)
    for n in names:
        if n not in FEATURE_NAMES:
            raise ValueError(f"unknown feature {n!r}")
    if args.feature and len(names) == 1:
        pearson([float(f[names[0]]) for f in feats], rewards)  # surface degenerate input as an error
    sys.stdout.write(_pcc_csv(feats, rewards, names))
    return 0


def _decision_logger(k: int, sink: list):
    """Record (normalized candidate features, reward) for every step that
    chose a filled candidate slot."""
    nf = len(FEATURE_NAMES)

    def hook(batch):
        for t in batch:
            if t.action >= k:
                continue
            block = np.asarray(t.state[t.action * nf:(t.action + 1) * nf], dtype=float)
            if not block.any():
                continue
            sink.append({"features": dict(zip(FEATURE_NAMES, block.tolist())), "reward": t.reward})

    return hook


def cmd_train(args, cfg: Config) -> int:
    env = SimEnvironment.load(_need(cfg.env, "--env"))
    env.k = cfg.k
    model = rl.PolicyModel.create(env.state_size, env.n_actions, seed=cfg.seed, alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma)
    decisions: list = []
    hook = _decision_logger(cfg.k, decisions) if args.decisions else None
    t0 = time.perf_counter()
    res = rl.train(model, env, cfg.epochs, batch_size=cfg.batch, agents=cfg.agents, seed=cfg.seed, on_transitions=hook)
    log.info("trained %d epochs in %.1fs", res.epochs_run, time.perf_counter() - t0)
    out = _need(cfg.model, "--out")
    rl.save(model, out)
    if args.decisions:
        with open(args.decisions, "w", encoding="utf-8") as f:
            for d in decisions:
                f.write(json.dumps(d, sort_keys=True) + "\n")
    _emit({"epochs": res.epochs_run, "rewards": res.rewards, "model": str(out)})
    return 0


def _advisor(cfg: Config, store: HistoryStore, model: rl.PolicyModel, env: SimEnvironment) -> Advisor:
    return Advisor(store, model, env.cluster, env.datasets, k=cfg.k, seed=cfg.seed)


def cmd_recommend(args, cfg: Config) -> int:
    store = HistoryStore(cfg.history, cfg.window) if cfg.history else HistoryStore(window=cfg.window)
    model = rl.load(_need(cfg.model, "--model"))
    env = SimEnvironment.load(_need(cfg.env, "--env"))
    adv = _advisor(cfg, store, model, env)
    mode = "argmax" if args.argmax else "sample"
    if args.consumer:
        rec = adv.reorganize(args.dataset, [_load_ir(p) for p in args.consumer], mode)
    else:
        rec = adv.recommend(_load_ir(_need(args.producer, "--producer")), args.dataset, mode)
    _emit(rec.to_dict())
    return 0


def cmd_match(args, cfg: Config) -> int:
    spec = json.loads(Path(args.dataset_scheme).read_text(encoding="utf-8"))
    scheme = PartitionScheme.from_dict(spec["scheme"])
    cand = PartitionerCandidate.from_dict(spec["candidate"]) if spec.get("candidate") else None
    consumer = _load_ir(args.consumer)
    verdicts = consult(spec["dataset"], scheme, consumer, cand)
    _emit({"dataset": spec["dataset"], "consumer": consumer.ir_id, "verdicts": [v.to_dict() for v in verdicts]})
    return 0


def cmd_simulate(args, cfg: Config) -> int:
    env = SimEnvironment.load(_need(cfg.env, "--env"))
    schemes = {d: ds.applied for d, ds in env.datasets.items()}
    if args.schemes:
        for d, s in json.loads(Path(args.schemes).read_text(encoding="utf-8")).items():
            schemes[d] = PartitionScheme.from_dict(s)
    rows = []
    for w in env.workloads:
        shuf = shuffle_bytes(w, schemes, env.cluster, env.datasets)
        rows.append({
            "query_id": w.query_id,
            "latency": simulate_latency(w, schemes, env.cluster, env.datasets),
            "shuffle_bytes": shuf,
        })
    _emit({"schemes": {d: s.to_dict() for d, s in sorted(schemes.items())}, "workloads": rows})
    return 0


def cmd_demo(args, cfg: Config) -> int:
    """Reddit workflow end to end: ingest history, train, recommend a layout
    for ``comments`` and consult it from the feature extractor."""
    t0 = time.perf_counter()
    out = Path(args.out) if args.out else None
    if out is not None and (out / "history" / "log.jsonl").exists():
        raise ValueError(f"{out} already holds a demo history; pick a fresh --out")
    graphs, records = reddit_history()
    store = HistoryStore(out / "history" if out else None, cfg.window)
    for g in graphs:
        store.register(g)
    store.ingest_many(records)
    log.info("ingested %d records into %d groups", len(records), len(store.skeleton.groups))

    producer = next(g for g in graphs if g.ir_id == "comments-loader")
    extractor = next(g for g in graphs if g.ir_id == "reddit-feature-extractor")
    spec = reddit_env_spec(extractor)
    env = SimEnvironment.from_dict(spec)
    env.k = cfg.k
    model = rl.PolicyModel.create(env.state_size, env.n_actions, seed=cfg.seed, alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma)
    epochs = args.epochs if args.epochs is not None else 50
    res = rl.train(model, env, epochs, batch_size=cfg.batch, agents=cfg.agents, seed=cfg.seed)
    log.info("trained %d epochs, last mean reward %.4f", res.epochs_run, res.rewards[-1] if res.rewards else float("nan"))

    rec = _advisor(cfg, store, model, env).recommend(producer, "comments", "argmax")
    verdicts = consult("comments", rec.chosen, extractor, rec.candidate)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        rl.save(model, out / "model.bin")
        (out / "env.json").write_text(json.dumps(spec, sort_keys=True, indent=2), encoding="utf-8")
        (out / "producer.json").write_text(producer.to_json(), encoding="utf-8")
        (out / "consumer.json").write_text(extractor.to_json(), encoding="utf-8")
    log.info("demo finished in %.1fs", time.perf_counter() - t0)
    _emit({
        "groups": len(store.skeleton.groups),
        "epochs": res.epochs_run,
        "rewards": res.rewards,
        "recommendation": rec.to_dict(),
        "verdicts": [v.to_dict() for v in verdicts],
    })
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="udfpart", description=__doc__)
    p.add_argument("--config", help=f"JSON config (default: ${CONFIG_ENV})")
    p.add_argument("--history", help="history store directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, help="candidate slots in the state")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="register IR graphs and append a run log")
    s.add_argument("--log", help="JSONL run log")
    s.add_argument("--ir", action="append", help="IR graph JSON (repeatable)")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("enumerate", help="partitioner candidates for a dataset")
    s.add_argument("--ir", action="append", required=True)
    s.add_argument("--dataset", required=True)
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("stats", help="CSV of feature/reward correlation for all features")
    s.add_argument("--log", required=True, help="decision JSONL of {features, reward}")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("pcc", help="CSV of feature/reward correlation")
    s.add_argument("--log", required=True, help="decision JSONL of {features, reward}")
    s.add_argument("--feature", action="append")
    s.set_defaults(func=cmd_pcc)

    s = sub.add_parser("train", help="train a policy against a simulator spec")
    s.add_argument("--env")
    s.add_argument("--out", dest="model")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--agents", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--decisions", help="write chosen-candidate features and rewards as JSONL")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("recommend", help="recommend a partitioning for a dataset")
    s.add_argument("--producer")
    s.add_argument("--consumer", action="append", help="explicit consumers (reorganize mode)")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model")
    s.add_argument("--env")
    s.add_argument("--argmax", action="store_true")
    s.set_defaults(func=cmd_recommend)

    s = sub.add_parser("match", help="per-join verdicts for an applied partitioning")
    s.add_argument("--dataset-scheme", required=True)
    s.add_argument("--consumer", required=True)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("simulate", help="simulated latency and shuffle per workload")
    s.add_argument("--env")
    s.add_argument("--schemes", help="JSON {dataset: scheme} overriding applied schemes")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("demo", help="Reddit workflow end to end")
    s.add_argument("--out", help="directory for history, model and inputs")
    s.add_argument("--epochs", type=int)
    s.add_argument("--alpha", type=float)
    s.set_defaults(func=cmd_demo)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = Config.resolve(args)
        return args.func(args, cfg)
    except (AdvisorError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
