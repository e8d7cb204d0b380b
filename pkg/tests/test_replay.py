"""
Tests for the replay buffer
"""

import numpy as np
import pytest

from cirlab.replay import (
    BufferUnderflowError,
    ReplayBuffer,
    ReplayError,
    Transition,
    buffer_add,
    buffer_sample,
)


def _transition(i: float, obs_dim: int = 2, act_dim: int = 1) -> Transition:
    return Transition(
        state=np.full(obs_dim, i),
        action=np.full(act_dim, 0.1),
        reward=i,
        next_state=np.full(obs_dim, i + 1),
        done=False,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_ring_evicts_oldest():
    """Capacity 3 with 4 adds keeps the last three."""
    buffer = ReplayBuffer(capacity=3, obs_dim=2, act_dim=1)
    for i in range(4):
        buffer_add(buffer, _transition(float(i)))
    assert len(buffer) == 3
    assert sorted(buffer.rewards.tolist()) == [1.0, 2.0, 3.0]
    assert buffer.pos == 1


def test_empty_buffer_underflows(rng):
    buffer = ReplayBuffer(capacity=4, obs_dim=2, act_dim=1)
    with pytest.raises(BufferUnderflowError, match="empty"):
        buffer_sample(buffer, 1, rng)


def test_short_buffer_underflows(rng):
    buffer = ReplayBuffer(capacity=8, obs_dim=2, act_dim=1)
    buffer.add(_transition(0.0))
    with pytest.raises(BufferUnderflowError, match="batch needs 4"):
        buffer.sample(4, rng)


def test_underflow_is_a_replay_error():
    assert issubclass(BufferUnderflowError, ReplayError)


def test_shape_mismatch_is_rejected():
    buffer = ReplayBuffer(capacity=4, obs_dim=3, act_dim=1)
    with pytest.raises(ReplayError, match="do not match"):
        buffer.add(_transition(0.0, obs_dim=2))


def test_invalid_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0, obs_dim=1, act_dim=1)


class TestTransition:
    """Validation at construction."""

    def test_non_finite_state(self):
        with pytest.raises(ValueError, match="state"):
            Transition(np.array([np.inf]), np.zeros(1), 0.0, np.zeros(1), False)

    def test_non_finite_reward(self):
        with pytest.raises(ValueError, match="reward"):
            Transition(np.zeros(1), np.zeros(1), float("nan"), np.zeros(1), False)

    def test_action_outside_box(self):
        with pytest.raises(ValueError, match=r"\[-1, 1\]"):
            Transition(np.zeros(1), np.array([1.5]), 0.0, np.zeros(1), False)

    def test_fields_are_coerced(self):
        t = Transition([1, 2], [0], 3, [4, 5], 1)
        assert t.state.dtype == np.float64
        assert isinstance(t.reward, float)
        assert t.done is True


def test_batch_preserves_stored_values(rng):
    buffer = ReplayBuffer(capacity=5, obs_dim=2, act_dim=1)
    values = rng.normal(size=5)
    for v in values:
        buffer.add(Transition(np.array([v, -v]), np.array([0.25]), v, np.array([2 * v, 0.0]), True))
    batch = buffer.sample(16, rng)
    assert len(batch) == 16
    for row in range(16):
        v = batch.rewards[row]
        assert v in values
        assert batch.states[row].tolist() == [v, -v]
        assert batch.next_states[row].tolist() == [2 * v, 0.0]
        assert batch.actions[row, 0] == 0.25
        assert batch.dones[row] == 1.0


def test_sampling_is_reproducible():
    buffer = ReplayBuffer(capacity=10, obs_dim=2, act_dim=1)
    for i in range(10):
        buffer.add(_transition(float(i)))
    a = buffer.sample_indices(32, np.random.default_rng(5))
    b = buffer.sample_indices(32, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_sampling_is_uniform(rng):
    """Chi-squared statistic over 1e5 draws stays below the 0.1% critical value."""
    buffer = ReplayBuffer(capacity=10, obs_dim=2, act_dim=1)
    for i in range(10):
        buffer.add(_transition(float(i)))
    draws = buffer.sample_indices(100_000, rng)
    counts = np.bincount(draws, minlength=10)
    expected = draws.size / 10
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 27.88
