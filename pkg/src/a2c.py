"""
A2C module for Leverage Bidder.
On-policy advantage actor-critic over a discretized bid adjust ratio.
"""

from __future__ import annotations

import logging

import numpy as np

from .market import STATE_DIM, RunningNormalizer
from .nn import DivergenceError, mlp_new
from .policies import AgentError, DiscretePolicy
from .replay import TransitionBatch

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class A2cAgent:
    """Softmax policy over evenly spaced ratios in [-range, range] plus a state-value network."""

    def __init__(
        self,
        state_dim: int = STATE_DIM,
        range_: float = 1.0,
        n_actions: int = 10,
        hidden: tuple[int, ...] = (100, 50),
        gamma: float = 0.9,
        lr_policy: float = 0.001,
        lr_value: float = 0.001,
        entropy: float = 0.01,
        seed: int = 0
    ):
        if n_actions < 2:
            raise AgentError(f"Need at least two discrete actions, got {n_actions}")
        self.range = range_
        self.alphas = np.linspace(-range_, range_, n_actions)
        self.gamma = gamma
        self.lr_policy = lr_policy
        self.lr_value = lr_value
        self.entropy = entropy
        self.policy = mlp_new([state_dim, *hidden, n_actions], 'relu', 'softmax', seed)
        self.value = mlp_new([state_dim, *hidden, 1], 'relu', 'linear', seed + 1)
        self.rng = np.random.default_rng(seed + 2)

    @property
    def n_actions(self) -> int:
        return len(self.alphas)

    def probabilities(self, states: np.ndarray) -> np.ndarray:
        return self.policy.predict(np.atleast_2d(states))

    def sample_actions(self, states: np.ndarray) -> np.ndarray:
        """Draw one action index per row from the current policy."""
        probs = self.probabilities(states)
        u = self.rng.random(probs.shape[0])[:, None]
        indices = (np.cumsum(probs, axis=1) < u).sum(axis=1)
        return np.minimum(indices, self.n_actions - 1)

    def greedy_actions(self, states: np.ndarray) -> np.ndarray:
        return np.argmax(self.probabilities(states), axis=1)

    def action_indices(self, alphas: np.ndarray) -> np.ndarray:
        """Nearest grid index for each ratio."""
        alphas = np.asarray(alphas, dtype=np.float64).reshape(-1, 1)
        return np.argmin(np.abs(alphas - self.alphas[None, :]), axis=1)

    def update(self, batch: TransitionBatch) -> dict:
        """
        One advantage actor-critic step.

        A = r + gamma * V(s') - V(s); the policy follows grad log pi(a|s) * A
        plus an entropy bonus, the value regresses to r + gamma * V(s').

        Returns:
            Dictionary with policy_loss, value_loss, entropy and mean advantage

        Raises:
            AgentError: On an empty batch
            DivergenceError: If losses stop being finite
        """
        n = len(batch)
        if n == 0:
            raise AgentError("Cannot update on an empty batch")
        indices = self.action_indices(batch.actions)

        next_v = self.value.predict(batch.next_states)[:, 0]
        v, value_cache = self.value.forward(batch.states)
        targets = batch.rewards + self.gamma * (1.0 - batch.dones) * next_v
        advantages = targets - v[:, 0]

        probs, policy_cache = self.policy.forward(batch.states)
        clipped = np.maximum(probs, PROB_FLOOR)
        chosen = clipped[np.arange(n), indices]
        entropy = -np.sum(clipped * np.log(clipped), axis=1)
        policy_loss = float(-np.mean(np.log(chosen) * advantages) - self.entropy * np.mean(entropy))
        value_loss = float(np.mean(advantages ** 2))
        if not (np.isfinite(policy_loss) and np.isfinite(value_loss)):
            raise DivergenceError("A2C loss is not finite")

        prob_grad = self.entropy * (np.log(clipped) + 1.0) / n
        prob_grad[np.arange(n), indices] -= advantages / (chosen * n)
        self.policy.adam_step(self.policy.backward(policy_cache, prob_grad), self.lr_policy)

        value_grad = (-2.0 * advantages / n).reshape(-1, 1)
        self.value.adam_step(self.value.backward(value_cache, value_grad), self.lr_value)

        return {
            'policy_loss': policy_loss,
            'value_loss': value_loss,
            'entropy': float(np.mean(entropy)),
            'advantage': float(np.mean(advantages)),
        }

    def greedy_policy(self, normalizer: RunningNormalizer) -> DiscretePolicy:
        return DiscretePolicy(self.policy, normalizer, self.alphas)


def a2c_update(agent: A2cAgent, rollout: TransitionBatch) -> dict:
    return agent.update(rollout)
