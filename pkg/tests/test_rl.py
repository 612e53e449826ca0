from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from udfpart import rl
from udfpart.errors import (
    CheckpointFormatError,
    CheckpointVersionError,
    DimensionMismatchError,
    EmptyWindowError,
    NonFiniteGradientError,
)

seeds = st.integers(0, 2**32 - 1)


def small(seed=0, **kw):
    return rl.PolicyModel.create(6, 4, seed=seed, hidden=(8, 5), **kw)


def zero(net: rl.Mlp) -> None:
    for p in net.params():
        p[...] = 0.0


def test_zero_weights_give_uniform_policy():
    m = small()
    zero(m.actor)
    assert np.array_equal(m.policy(np.ones(6))[0], np.full(4, 0.25))


def test_create_is_deterministic_and_seed_dependent():
    a, b, c = small(3), small(3), small(4)
    assert all(np.array_equal(x, y) for x, y in zip(a.actor.params(), b.actor.params()))
    assert not np.array_equal(a.actor.weights[0], c.actor.weights[0])
    assert rl.PolicyModel.create(29, 4).actor.dims == (29, 128, 64, 4)


def test_hand_set_output_bias_dominates():
    m = small()
    zero(m.actor)
    m.actor.biases[-1][2] = 10.0
    p = m.policy(np.zeros(6))[0]
    assert p[2] > 0.99
    a, _ = rl.act(m, np.zeros(6), np.random.default_rng(0), greedy=True)
    assert a == 2
    a, q = rl.act(m, np.zeros(6), np.random.default_rng(0), mask=[1, 1, 0, 1], greedy=True)
    assert a != 2 and q[2] == 0 and q.sum() == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        small().policy(np.zeros(5))


def test_reward_examples():
    same = [rl.Run(100, 10), rl.Run(50, 5)]
    assert rl.reward(same, same) == 1.0
    assert rl.reward([rl.Run(100, 5)], [rl.Run(100, 10)]) == 2.0
    with pytest.raises(EmptyWindowError):
        rl.reward([], same)
    with pytest.raises(EmptyWindowError):
        rl.reward(same, [rl.Run(1, 0)])


def _batch(rng, rewards, next_state=False):
    return [
        rl.Transition(rng.normal(size=6), int(rng.integers(4)), float(r), rng.normal(size=6) if next_state else None)
        for r in rewards
    ]


def test_positive_advantage_raises_log_prob():
    rng = np.random.default_rng(1)
    m = small(beta=0.0)
    zero(m.critic)
    t = rl.Transition(rng.normal(size=6), 1, 1.0)
    before = np.log(m.policy(t.state)[0, 1])
    rl.update(m, [t])
    assert np.log(m.policy(t.state)[0, 1]) > before


def test_entropy_bonus_raises_entropy_without_advantage():
    rng = np.random.default_rng(2)
    m = small(beta=10.0, init_scale=1.0)
    zero(m.critic)
    batch = _batch(rng, [0.0] * 8)
    states = np.stack([t.state for t in batch])
    hs = [rl.entropy(m.policy(states)).mean()]
    for _ in range(100):
        rl.update(m, batch)
        hs.append(rl.entropy(m.policy(states)).mean())
    assert all(b >= a - 1e-12 for a, b in zip(hs, hs[1:]))
    assert hs[-1] > hs[0]


def test_zero_advantage_and_no_entropy_leave_actor_unchanged():
    rng = np.random.default_rng(3)
    m = small(beta=0.0)
    zero(m.critic)
    before = [p.copy() for p in m.actor.params()]
    rl.update(m, _batch(rng, [0.0] * 8))
    assert all(np.array_equal(a, b) for a, b in zip(before, m.actor.params()))


def test_non_finite_gradient_preserves_weights():
    m = small()
    before = [p.copy() for p in m.actor.params() + m.critic.params()]
    bad = rl.Transition(np.full(6, np.nan), 0, 1.0)
    with pytest.raises(NonFiniteGradientError):
        rl.update(m, [bad])
    assert all(np.array_equal(a, b) for a, b in zip(before, m.actor.params() + m.critic.params()))
    with pytest.raises(ValueError):
        rl.update(m, [])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=10))
def test_softmax_and_entropy_bounds(z):
    z = np.array(z)
    p = rl.softmax(z)
    assert p.sum() == pytest.approx(1.0) and (p >= 0).all()
    h = rl.entropy(p)
    assert -1e-12 <= h <= np.log(len(z)) + 1e-12
    assert np.allclose(np.exp(rl.log_softmax(z)), p)


@given(seeds, st.floats(0.1, 10))
def test_actor_gradient_scales_with_reward(seed, c):
    rng = np.random.default_rng(seed)
    m = small(seed % 97, beta=0.0)
    zero(m.critic)
    batch = _batch(rng, rng.uniform(-1, 1, size=4))
    scaled = [rl.Transition(t.state, t.action, c * t.reward) for t in batch]
    _, g1, _ = rl.loss_and_grads(m, batch)
    _, g2, _ = rl.loss_and_grads(m, scaled)
    for a, b in zip(g1, g2):
        assert np.allclose(c * a, b, atol=1e-12)


def _bandit():
    return rl.BanditEnv([1.0, 2.0, 1.0], np.linspace(0.1, 0.6, 6))


def test_zero_epochs_is_a_no_op():
    env = _bandit()
    m = rl.PolicyModel.create(6, 3, seed=0)
    before = [p.copy() for p in m.actor.params()]
    res = rl.train(m, env, 0)
    assert res.epochs_run == 0 and res.rewards == []
    assert all(np.array_equal(a, b) for a, b in zip(before, m.actor.params()))


def test_training_is_seeded():
    env = _bandit()
    a, b = rl.PolicyModel.create(6, 3, seed=0), rl.PolicyModel.create(6, 3, seed=0)
    ra = rl.train(a, env, 3, seed=5, agents=2)
    rb = rl.train(b, env, 3, seed=5, agents=2)
    assert ra.rewards == rb.rewards
    assert all(np.array_equal(x, y) for x, y in zip(a.actor.params(), b.actor.params()))


def test_more_agents_learn_the_same_best_action():
    env = _bandit()
    picks = []
    for agents in (1, 4):
        m = rl.PolicyModel.create(6, 3, seed=0, alpha=0.01)
        rl.train(m, env, 60, agents=agents, seed=1)
        picks.append(int(np.argmax(m.policy(env.state)[0])))
    assert picks == [1, 1]


def test_checkpoint_round_trip(tmp_path):
    m = small(7, alpha=0.02, beta=0.03, gamma=0.5)
    path = tmp_path / "m.bin"
    rl.save(m, path)
    back = rl.load(path)
    assert (back.alpha, back.beta, back.gamma) == (0.02, 0.03, 0.5)
    assert all(np.array_equal(x, y) for x, y in zip(m.actor.params() + m.critic.params(), back.actor.params() + back.critic.params()))
    assert path.read_bytes()[:4] == b"LCHS"
    x = np.random.default_rng(0).normal(size=(5, 6))
    assert np.array_equal(m.policy(x), back.policy(x)) and np.array_equal(m.value(x), back.value(x))


def test_checkpoint_errors(tmp_path):
    m = small()
    path = tmp_path / "m.bin"
    rl.save(m, path)
    data = path.read_bytes()
    cases = {
        "trunc": (data[:-3], CheckpointFormatError),
        "magic": (b"XXXX" + data[4:], CheckpointFormatError),
        "version": (data[:4] + (2).to_bytes(4, "little") + data[8:], CheckpointVersionError),
        "trail": (data + b"\0", CheckpointFormatError),
    }
    for name, (blob, err) in cases.items():
        p = tmp_path / name
        p.write_bytes(blob)
        with pytest.raises(err):
            rl.load(p)
