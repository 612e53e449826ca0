"""Correlation between each normalised candidate feature and the reward its
selection earned, over all decisions taken while training on a mixed
workload of the three Reddit consumers.

    python3 scripts/feature_pcc.py --epochs 50 > pcc.csv
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from udfpart import rl
from udfpart.errors import DegenerateVarianceError
from udfpart.features import FEATURE_NAMES, N_FEATURES, pearson
from udfpart.fixtures import author_join_consumer, reddit_consumer, reddit_env_spec, subreddit_join_consumer
from udfpart.sim import SimEnvironment


def mixed_spec(inclusion: float) -> dict:
    graphs = [reddit_consumer(), author_join_consumer(), subreddit_join_consumer()]
    spec = reddit_env_spec(graphs[0])
    spec["irs"] = [g.to_dict() for g in graphs]
    spec["workloads"] = [
        {"query_id": g.ir_id, "ir_id": g.ir_id, "inputs": sorted(g.datasets_read()), "inclusion": inclusion,
         "frequency": float(i + 1), "distance": 3600.0 * (i + 1), "recency": 600.0 * i}
        for i, g in enumerate(graphs)
    ]
    return spec


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--inclusion", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    env = SimEnvironment.from_dict(mixed_spec(args.inclusion))
    feats: list[np.ndarray] = []
    rewards: list[float] = []

    def record(batch):
        for t in batch:
            block = t.state[t.action * N_FEATURES:(t.action + 1) * N_FEATURES] if t.action < env.k else None
            if block is not None and block.any():
                feats.append(block)
                rewards.append(t.reward)

    model = rl.PolicyModel.create(env.state_size, env.n_actions, seed=args.seed)
    rl.train(model, env, args.epochs, seed=args.seed, on_transitions=record)
    x = np.stack(feats)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["feature", "decisions", "pcc"])
    for i, name in enumerate(FEATURE_NAMES):
        try:
            r = f"{pearson(x[:, i].tolist(), rewards):.6f}"
        except DegenerateVarianceError:
            r = "nan"
        w.writerow([name, len(rewards), r])


if __name__ == "__main__":
    main()
