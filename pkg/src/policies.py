"""
Policies module for Leverage Bidder.
Bidding policies over market states: fixed ratios and greedy learned policies.
"""

from __future__ import annotations

import logging
from typing import Protocol

import numpy as np

from .market import MarketState, RunningNormalizer, state_features
from .nn import Network
from .storage import load_checkpoint

logger = logging.getLogger(__name__)


class AgentError(Exception):
    """Agent or policy error."""
    pass


class Policy(Protocol):
    def act(self, state: MarketState) -> np.ndarray:
        ...


class FixedPolicy:
    """Emits the same bid adjust ratio for every product at every step."""

    def __init__(self, alpha: float):
        self.alpha = float(alpha)

    def act(self, state: MarketState) -> np.ndarray:
        return np.full(state.n_products, self.alpha)


def fixed_policy(alpha_const: float, range_: float = 1.0) -> FixedPolicy:
    """
    Build a constant-ratio policy; alpha_const = 0 is the manual baseline.

    Raises:
        AgentError: If |alpha_const| exceeds range
    """
    if abs(alpha_const) > range_:
        raise AgentError(f"Fixed ratio {alpha_const} exceeds range {range_}")
    return FixedPolicy(alpha_const)


class ActorPolicy:
    """Greedy deterministic policy: alpha = range * actor(standardized state)."""

    def __init__(self, actor: Network, normalizer: RunningNormalizer, range_: float):
        self.actor = actor
        self.normalizer = normalizer
        self.range = range_

    def act(self, state: MarketState) -> np.ndarray:
        if state.n_products == 0:
            return np.zeros(0)
        rows = self.normalizer.transform(state_features(state))
        return np.clip(self.range * self.actor.predict(rows)[:, 0], -self.range, self.range)


class DiscretePolicy:
    """Greedy policy over a softmax network: the most probable ratio per product."""

    def __init__(self, network: Network, normalizer: RunningNormalizer, alphas: np.ndarray):
        self.network = network
        self.normalizer = normalizer
        self.alphas = np.asarray(alphas, dtype=np.float64)

    def act(self, state: MarketState) -> np.ndarray:
        if state.n_products == 0:
            return np.zeros(0)
        rows = self.normalizer.transform(state_features(state))
        return self.alphas[np.argmax(self.network.predict(rows), axis=1)]


def load_policy(checkpoint_dir: str):
    """
    Rebuild a greedy policy from a checkpoint directory.

    Raises:
        AgentError: If the checkpoint kind is unknown
    """
    manifest, networks = load_checkpoint(checkpoint_dir)
    kind = manifest.get('policy')
    range_ = float(manifest.get('range', 1.0))
    if kind == 'fixed':
        return fixed_policy(float(manifest['alpha']), range_)

    normalizer = RunningNormalizer.from_dict(manifest['normalizer'])
    if kind == 'actor':
        return ActorPolicy(networks['actor'], normalizer, range_)
    if kind == 'discrete':
        return DiscretePolicy(networks['policy'], normalizer, np.array(manifest['alphas']))
    raise AgentError(f"Unknown policy kind in checkpoint: {kind}")
