"""Mean reward per epoch on the Reddit simulator for several agent counts.

    python3 scripts/train_curve.py --epochs 100 --agents 1 4 > curve.csv

``p_candidate`` is the policy's probability of the first slot (the
consumer's own candidate) on a fixed probe state.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from udfpart import rl
from udfpart.fixtures import author_join_consumer, reddit_consumer, reddit_env_spec, subreddit_join_consumer
from udfpart.sim import SimEnvironment

CONSUMERS = {
    "extractor": reddit_consumer,
    "author": author_join_consumer,
    "subreddit": subreddit_join_consumer,
}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--agents", type=int, nargs="+", default=[1, 4])
    p.add_argument("--consumer", choices=sorted(CONSUMERS), default="extractor")
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    env = SimEnvironment.from_dict(reddit_env_spec(CONSUMERS[args.consumer]()))
    probe = env.observe(np.random.default_rng(args.seed)).state
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["agents", "epoch", "mean_reward", "p_candidate"])
    for agents in args.agents:
        model = rl.PolicyModel.create(env.state_size, env.n_actions, seed=args.seed, alpha=args.alpha)
        probs: list[float] = []

        def stop(m, epoch):
            probs.append(float(m.policy(probe)[0, 0]))
            return False

        res = rl.train(model, env, args.epochs, agents=agents, seed=args.seed, stop=stop)
        for epoch, (r, pc) in enumerate(zip(res.rewards, probs), 1):
            w.writerow([agents, epoch, f"{r:.6f}", f"{pc:.6f}"])


if __name__ == "__main__":
    main()
