"""
DDPG module for Leverage Bidder.
Shared per-product actor-critic with target networks.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from .market import STATE_DIM, RunningNormalizer
from .nn import GradientSet, DivergenceError, mlp_new, soft_update
from .policies import AgentError, ActorPolicy
from .replay import OUProcess, TransitionBatch

logger = logging.getLogger(__name__)

# Uniform bound of the actor and critic output layers; initial actions sit near alpha = 0
FINAL_LAYER_BOUND = 3e-3


def _negated(grads: GradientSet) -> GradientSet:
    return GradientSet(
        weights=[-w for w in grads.weights],
        biases=[-b for b in grads.biases],
        inputs=-grads.inputs,
    )


class DdpgAgent:
    """
    Actor maps one product's state to tanh(u) in [-1, 1], scaled by range.
    Critic scores state concatenated with alpha / range.
    """

    def __init__(
        self,
        state_dim: int = STATE_DIM,
        range_: float = 1.0,
        hidden: tuple[int, ...] = (100, 50),
        gamma: float = 0.9,
        tau: float = 0.01,
        lr_actor: float = 0.001,
        lr_critic: float = 0.0001,
        l2_critic: float = 0.01,
        hidden_activation: str = 'relu',
        seed: int = 0
    ):
        if range_ <= 0:
            raise AgentError(f"range must be positive, got {range_}")
        self.state_dim = state_dim
        self.range = range_
        self.gamma = gamma
        self.tau = tau
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.l2_critic = l2_critic

        self.actor = mlp_new([state_dim, *hidden, 1], hidden_activation, 'tanh', seed, FINAL_LAYER_BOUND)
        self.critic = mlp_new([state_dim + 1, *hidden, 1], hidden_activation, 'linear', seed + 1, FINAL_LAYER_BOUND)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()

    def act(self, states: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
        """Bid adjust ratios for standardized state rows, optionally perturbed."""
        states = np.atleast_2d(states)
        alphas = self.range * self.actor.predict(states)[:, 0]
        if noise is not None:
            alphas = alphas + noise
        return np.clip(alphas, -self.range, self.range)

    def _critic_input(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.hstack([states, np.asarray(actions, dtype=np.float64).reshape(-1, 1) / self.range])

    def q_values(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.critic.predict(self._critic_input(np.atleast_2d(states), actions))[:, 0]

    def policy_objective(self, states: np.ndarray) -> float:
        """Mean Q(s, pi(s)) over the rows."""
        states = np.atleast_2d(states)
        return float(np.mean(self.q_values(states, self.act(states))))

    def policy_gradient(self, states: np.ndarray) -> tuple[float, GradientSet]:
        """
        Deterministic policy gradient of mean Q(s, pi(s)) w.r.t. the actor.

        Returns:
            Tuple of (objective, ascent gradient)
        """
        states = np.atleast_2d(states)
        n = states.shape[0]
        u, actor_cache = self.actor.forward(states)
        q, critic_cache = self.critic.forward(np.hstack([states, u]))
        critic_grads = self.critic.backward(critic_cache, np.full((n, 1), 1.0 / n))
        action_grad = critic_grads.inputs[:, -1:]
        return float(np.mean(q)), self.actor.backward(actor_cache, action_grad)

    def update(self, batch: TransitionBatch) -> tuple[float, float]:
        """
        One critic step, one actor step and a soft target update.

        Terminal rows use y = r.

        Returns:
            Tuple of (critic_loss before the step, actor objective before its step)

        Raises:
            AgentError: On an empty batch
            DivergenceError: If losses or gradients stop being finite
        """
        n = len(batch)
        if n == 0:
            raise AgentError("Cannot update on an empty batch")

        next_u = self.target_actor.predict(batch.next_states)
        next_q = self.target_critic.predict(np.hstack([batch.next_states, next_u]))[:, 0]
        targets = batch.rewards + self.gamma * (1.0 - batch.dones) * next_q

        q, cache = self.critic.forward(self._critic_input(batch.states, batch.actions))
        error = q[:, 0] - targets
        critic_loss = float(np.mean(error ** 2))
        if not np.isfinite(critic_loss):
            raise DivergenceError(f"Critic loss is not finite: {critic_loss}")
        grads = self.critic.backward(cache, (2.0 * error / n).reshape(-1, 1))
        self.critic.adam_step(grads, self.lr_critic, self.l2_critic)

        objective, actor_grads = self.policy_gradient(batch.states)
        if not np.isfinite(objective):
            raise DivergenceError(f"Actor objective is not finite: {objective}")
        self.actor.adam_step(_negated(actor_grads), self.lr_actor)

        soft_update(self.target_actor, self.actor, self.tau)
        soft_update(self.target_critic, self.critic, self.tau)
        return critic_loss, objective

    def greedy_policy(self, normalizer: RunningNormalizer) -> ActorPolicy:
        return ActorPolicy(self.actor, normalizer, self.range)


def ddpg_act(agent: DdpgAgent, state: np.ndarray, explore: bool = False, ou: Optional[OUProcess] = None) -> np.ndarray:
    """Actor output with optional OU exploration, clamped to [-range, range]."""
    noise = ou.sample() if explore and ou is not None else None
    return agent.act(state, noise)


def ddpg_update(agent: DdpgAgent, batch: TransitionBatch) -> tuple[float, float]:
    return agent.update(batch)
