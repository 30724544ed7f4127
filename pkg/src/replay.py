"""
Replay module for Leverage Bidder.
Experience memory, Ornstein-Uhlenbeck exploration and per-product training batches.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .market import Transition, RunningNormalizer, state_features, STATE_DIM

logger = logging.getLogger(__name__)


class ReplayError(Exception):
    """Replay memory error."""
    pass


class ReplayMemory:
    """FIFO ring buffer of real and hybrid transitions."""

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ReplayError(f"Capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        self._items.append(transition)

    def extend(self, transitions: Iterable[Transition]) -> None:
        self._items.extend(transitions)

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        """Sample up to n distinct transitions uniformly."""
        if not self._items:
            raise ReplayError("Cannot sample from an empty memory")
        n = min(n, len(self._items))
        indices = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in indices]


class OUProcess:
    """
    Ornstein-Uhlenbeck noise, one coordinate per target product.

    dx = theta * (mu - x) + sigma * N(0, 1)
    """

    def __init__(
        self,
        size: int,
        theta: float = 0.15,
        sigma: float = 0.2,
        mu: float = 0.0,
        seed: Optional[int] = None
    ):
        self.size = size
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self.rng = np.random.default_rng(seed)
        self.state = np.full(size, mu, dtype=np.float64)

    def reset(self) -> None:
        self.state = np.full(self.size, self.mu, dtype=np.float64)

    def sample(self) -> np.ndarray:
        dx = self.theta * (self.mu - self.state) + self.sigma * self.rng.standard_normal(self.size)
        self.state = self.state + dx
        return self.state.copy()


@dataclass
class TransitionBatch:
    """Per-product training rows flattened from joint transitions."""
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


def flatten_transitions(
    transitions: list[Transition],
    normalizer: RunningNormalizer,
    reward_scale: float = 1.0
) -> TransitionBatch:
    """
    Turn joint K-product transitions into standardized per-product rows.

    Each row carries its own product's weighted increment divided by reward_scale.
    """
    states, actions, rewards, next_states, dones = [], [], [], [], []
    for tr in transitions:
        k = tr.state.n_products
        states.append(state_features(tr.state))
        next_states.append(state_features(tr.next_state))
        actions.append(np.asarray(tr.actions, dtype=np.float64).reshape(k))
        rewards.append(np.asarray(tr.rewards, dtype=np.float64).reshape(k) / reward_scale)
        dones.append(np.full(k, float(tr.done)))
    if not states:
        empty = np.zeros((0, STATE_DIM))
        return TransitionBatch(empty, np.zeros(0), np.zeros(0), empty.copy(), np.zeros(0))
    return TransitionBatch(
        states=normalizer.transform(np.vstack(states)),
        actions=np.concatenate(actions),
        rewards=np.concatenate(rewards),
        next_states=normalizer.transform(np.vstack(next_states)),
        dones=np.concatenate(dones),
    )
