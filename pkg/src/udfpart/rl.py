"""Actor-critic policy over partitioner candidates, written against numpy.

Both networks are ``input -> 128 -> 64 -> output`` MLPs with leaky-ReLU hidden
layers. The actor ends in a softmax over actions, the critic in a single
linear unit. Updates are plain SGD:

    actor  ascends   A * grad log pi(a|s) + beta * grad H(pi(.|s))
    critic descends  0.5 * (r + gamma * V(s') - V(s))^2

with the advantage ``A = r + gamma * V(s') - V(s)`` held constant.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointVersionError,
    DimensionMismatchError,
    EmptyWindowError,
    NonFiniteGradientError,
)

HIDDEN = (128, 64)
ITERATIONS_PER_EPOCH = 96
BATCH_SIZE = 16
MAGIC = b"LCHS"
FORMAT_VERSION = 1


@dataclass
class Mlp:
    weights: list[np.ndarray]  # layer i maps dims[i] -> dims[i+1], shape (in, out)
    biases: list[np.ndarray]
    slope: float = 0.01

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator, scale: float = 0.05, slope: float = 0.01) -> "Mlp":
        ws = [rng.uniform(-scale, scale, size=(a, b)) for a, b in zip(dims, dims[1:])]
        bs = [rng.uniform(-scale, scale, size=b) for b in dims[1:]]
        return cls(ws, bs, slope)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.slope)

    def forward(self, x: np.ndarray):
        """Return output and the activations needed for backprop."""
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if i == last else np.where(z > 0, z, self.slope * z)
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, dout: np.ndarray) -> list[np.ndarray]:
        """Gradients in ``params()`` order given dLoss/dOutput."""
        acts, pre = cache
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        d = dout
        for i in reversed(range(len(self.weights))):
            if i != len(self.weights) - 1:
                d = d * np.where(pre[i] > 0, 1.0, self.slope)
            grads_w[i] = acts[i].T @ d
            grads_b[i] = d.sum(axis=0)
            if i:
                d = d @ self.weights[i].T
        return [g for wb in zip(grads_w, grads_b) for g in wb]


@dataclass
class PolicyModel:
    actor: Mlp
    critic: Mlp
    alpha: float = 1e-3
    beta: float = 0.01
    gamma: float = 0.9

    @classmethod
    def create(
        cls,
        n_inputs: int,
        n_actions: int,
        seed: int = 0,
        hidden: Sequence[int] = HIDDEN,
        alpha: float = 1e-3,
        beta: float = 0.01,
        gamma: float = 0.9,
        slope: float = 0.01,
        init_scale: float = 0.05,
    ) -> "PolicyModel":
        rng = np.random.default_rng(seed)
        actor = Mlp.init([n_inputs, *hidden, n_actions], rng, init_scale, slope)
        critic = Mlp.init([n_inputs, *hidden, 1], rng, init_scale, slope)
        return cls(actor, critic, alpha, beta, gamma)

    @property
    def n_inputs(self) -> int:
        return self.actor.dims[0]

    @property
    def n_actions(self) -> int:
        return self.actor.dims[-1]

    def copy(self) -> "PolicyModel":
        return PolicyModel(self.actor.copy(), self.critic.copy(), self.alpha, self.beta, self.gamma)

    def _check(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.n_inputs:
            raise DimensionMismatchError(f"state has {states.shape[1]} entries, model expects {self.n_inputs}")
        return states

    def policy(self, states) -> np.ndarray:
        logits, _ = self.actor.forward(self._check(states))
        return softmax(logits)

    def value(self, states) -> np.ndarray:
        v, _ = self.critic.forward(self._check(states))
        return v[:, 0]


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def act(model: PolicyModel, state, rng: np.random.Generator, mask=None, greedy: bool = False) -> tuple[int, np.ndarray]:
    """Sample (or take the argmax of) the actor's distribution.

    ``mask`` zeroes invalid actions and renormalises the rest.
    """
    p = model.policy(state)[0]
    if mask is not None:
        p = np.where(np.asarray(mask, dtype=bool), p, 0.0)
        p = p / p.sum()
    if greedy:
        return int(np.argmax(p)), p
    return int(rng.choice(len(p), p=p)), p


class Run(NamedTuple):
    input_bytes: float
    latency: float


def reward(window: Sequence, baseline: Sequence) -> float:
    """Throughput of ``window`` divided by throughput of ``baseline``.

    Items need ``input_bytes`` and ``latency`` attributes; throughput is total
    bytes over total latency.
    """
    if not window or not baseline:
        raise EmptyWindowError("reward needs non-empty window and baseline")

    def throughput(runs):
        lat = math.fsum(r.latency for r in runs)
        if lat <= 0:
            raise EmptyWindowError("non-positive total latency")
        return math.fsum(r.input_bytes for r in runs) / lat

    return throughput(window) / throughput(baseline)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray | None = None


@dataclass(frozen=True)
class Diagnostics:
    actor_loss: float
    critic_loss: float
    entropy: float
    mean_advantage: float


def advantages(model: PolicyModel, batch: Sequence[Transition]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(states, targets, advantages) with targets r + gamma * V(s')."""
    states = model._check(np.stack([t.state for t in batch]))
    rewards = np.array([t.reward for t in batch], dtype=float)
    has_next = np.array([t.next_state is not None for t in batch])
    nxt = np.zeros(len(batch))
    if has_next.any():
        nxt[has_next] = model.value(np.stack([t.next_state for t in batch if t.next_state is not None]))
    targets = rewards + model.gamma * nxt
    adv = targets - model.value(states)
    return states, targets, adv


def loss_and_grads(model: PolicyModel, batch: Sequence[Transition], targets=None, adv=None):
    """Loss values and gradients of actor and critic losses.

    ``targets`` and ``adv`` default to the current critic's estimates and are
    treated as constants.
    """
    if targets is None or adv is None:
        states, targets, adv = advantages(model, batch)
    else:
        states = model._check(np.stack([t.state for t in batch]))
    n = len(batch)
    actions = np.array([t.action for t in batch])

    logits, a_cache = model.actor.forward(states)
    logp = log_softmax(logits)
    p = np.exp(logp)
    h = -(p * logp).sum(axis=1)
    taken = logp[np.arange(n), actions]
    actor_loss = -(adv * taken + model.beta * h).mean()

    onehot = np.zeros_like(p)
    onehot[np.arange(n), actions] = 1.0
    dlogp = adv[:, None] * (onehot - p)
    dh = -p * (logp + h[:, None])
    d_logits = -(dlogp + model.beta * dh) / n
    g_actor = model.actor.backward(a_cache, d_logits)

    v, c_cache = model.critic.forward(states)
    err = targets - v[:, 0]
    critic_loss = 0.5 * (err**2).mean()
    g_critic = model.critic.backward(c_cache, (-err / n)[:, None])
    diag = Diagnostics(float(actor_loss), float(critic_loss), float(h.mean()), float(adv.mean()))
    return diag, g_actor, g_critic


def update(model: PolicyModel, batch: Sequence[Transition]) -> Diagnostics:
    """One SGD step on both networks, in place. Weights are untouched if any
    gradient is non-finite."""
    if not batch:
        raise ValueError("empty batch")
    diag, g_actor, g_critic = loss_and_grads(model, batch)
    if not all(np.isfinite(g).all() for g in g_actor + g_critic):
        raise NonFiniteGradientError("non-finite gradient; update skipped")
    for p, g in zip(model.actor.params(), g_actor):
        p -= model.alpha * g
    for p, g in zip(model.critic.params(), g_critic):
        p -= model.alpha * g
    return diag


class Observation(NamedTuple):
    state: np.ndarray
    context: object = None
    mask: np.ndarray | None = None


class Environment(Protocol):
    state_size: int
    n_actions: int

    def observe(self, rng: np.random.Generator) -> Observation: ...

    def reward(self, obs: Observation, action: int) -> float: ...


@dataclass
class BanditEnv:
    """Fixed state, fixed reward per action. Handy for sanity runs."""

    rewards: Sequence[float]
    state: np.ndarray

    @property
    def state_size(self) -> int:
        return len(self.state)

    @property
    def n_actions(self) -> int:
        return len(self.rewards)

    def observe(self, rng):
        return Observation(self.state)

    def reward(self, obs, action):
        return float(self.rewards[action])


@dataclass
class TrainResult:
    model: PolicyModel
    rewards: list[float] = field(default_factory=list)  # mean reward per epoch
    diagnostics: list[Diagnostics] = field(default_factory=list)
    epochs_run: int = 0


def _collect(model: PolicyModel, env: Environment, obs: Observation, rng, n: int):
    out = []
    for _ in range(n):
        a, _ = act(model, obs.state, rng, mask=obs.mask)
        r = env.reward(obs, a)
        nxt = env.observe(rng)
        out.append(Transition(obs.state, a, r, nxt.state))
        obs = nxt
    return out, obs


def train(
    model: PolicyModel,
    env: Environment,
    epochs: int,
    batch_size: int = BATCH_SIZE,
    agents: int = 1,
    seed: int = 0,
    iterations: int = ITERATIONS_PER_EPOCH,
    stop: Callable[[PolicyModel, int], bool] | None = None,
    on_transitions: Callable[[list[Transition]], None] | None = None,
) -> TrainResult:
    """Train in place for ``epochs`` epochs of ``iterations`` steps per agent.

    Agents gather ``batch_size`` transitions each against a frozen copy of the
    current weights, in parallel threads, then their updates are applied one
    after another in agent order. Every agent draws from its own generator
    seeded by (seed, agent, epoch), so runs are reproducible. ``stop`` is
    polled after each epoch.
    """
    result = TrainResult(model)
    if epochs <= 0:
        return result
    pool = ThreadPoolExecutor(max_workers=agents) if agents > 1 else None
    try:
        for epoch in range(epochs):
            rngs = [np.random.default_rng([seed, a, epoch]) for a in range(agents)]
            obs = [env.observe(r) for r in rngs]
            rewards = []
            done = 0
            while done < iterations:
                n = min(batch_size, iterations - done)
                if pool is None:
                    batches = [_collect(model, env, obs[0], rngs[0], n)]
                else:
                    frozen = model.copy()
                    futs = [pool.submit(_collect, frozen, env, obs[a], rngs[a], n) for a in range(agents)]
                    batches = [f.result() for f in futs]
                for a, (batch, last) in enumerate(batches):
                    obs[a] = last
                    rewards.extend(t.reward for t in batch)
                    if on_transitions is not None:
                        on_transitions(batch)
                    result.diagnostics.append(update(model, batch))
                done += n
            result.rewards.append(float(np.mean(rewards)))
            result.epochs_run = epoch + 1
            if stop is not None and stop(model, epoch):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return result


def save(model: PolicyModel, path: str | Path) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", FORMAT_VERSION)
    buf += struct.pack("<4d", model.alpha, model.beta, model.gamma, model.actor.slope)
    for net in (model.actor, model.critic):
        dims = net.dims
        buf += struct.pack("<I", len(dims))
        buf += struct.pack(f"<{len(dims)}I", *dims)
        for w, b in zip(net.weights, net.biases):
            buf += np.ascontiguousarray(w, dtype="<f8").tobytes()
            buf += np.ascontiguousarray(b, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load(path: str | Path) -> PolicyModel:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointFormatError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: not a policy checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    alpha, beta, gamma, slope = struct.unpack("<4d", take(32))
    nets = []
    for _ in range(2):
        (nd,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{nd}I", take(4 * nd))
        ws, bs = [], []
        for a, b in zip(dims, dims[1:]):
            ws.append(np.frombuffer(take(8 * a * b), dtype="<f8").reshape(a, b).astype(float))
            bs.append(np.frombuffer(take(8 * b), dtype="<f8").astype(float))
        nets.append(Mlp(ws, bs, slope))
    if pos != len(data):
        raise CheckpointFormatError(f"{path}: trailing bytes")
    return PolicyModel(nets[0], nets[1], alpha, beta, gamma)
