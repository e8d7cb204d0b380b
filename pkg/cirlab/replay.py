"""
Replay storage for off-policy training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ReplayError(RuntimeError):
    """Raised on invalid replay buffer use."""


class BufferUnderflowError(ReplayError):
    """Raised when a buffer holds fewer items than requested."""


@dataclass
class Transition:
    """One (s, a, r, s', done) record."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        self.action = np.asarray(self.action, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        self.reward = float(self.reward)
        self.done = bool(self.done)
        for name in ("state", "action", "next_state"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"transition {name} contains non-finite values")
        if not np.isfinite(self.reward):
            raise ValueError("transition reward is not finite")
        if np.any(np.abs(self.action) > 1.0):
            raise ValueError("transition action outside [-1, 1]")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, transition: Transition) -> None:
        if transition.state.shape != (self.obs_dim,) or transition.action.shape != (self.act_dim,):
            raise ReplayError(
                f"transition shapes {transition.state.shape}/{transition.action.shape} "
                f"do not match buffer dims ({self.obs_dim},)/({self.act_dim},)"
            )
        i = self.pos
        self.states[i] = transition.state
        self.actions[i] = transition.action
        self.rewards[i] = transition.reward
        self.next_states[i] = transition.next_state
        self.dones[i] = float(transition.done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise BufferUnderflowError("cannot sample from an empty replay buffer")
        if self.size < batch_size:
            raise BufferUnderflowError(
                f"replay buffer holds {self.size} transitions, batch needs {batch_size}"
            )
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(batch_size, rng)
        return Batch(
            states=self.states[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            next_states=self.next_states[idx],
            dones=self.dones[idx],
        )


def buffer_add(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.add(transition)


def buffer_sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(batch_size, rng)
