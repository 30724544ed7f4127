"""
Tests for a2c module.
"""

import numpy as np
import pytest

from src.a2c import A2cAgent, a2c_update
from src.market import STATE_DIM, RunningNormalizer
from src.policies import AgentError, DiscretePolicy
from src.replay import TransitionBatch


def _batch(agent, n=6, seed=0):
    rng = np.random.default_rng(seed)
    return TransitionBatch(
        states=rng.standard_normal((n, STATE_DIM)),
        actions=agent.alphas[rng.integers(0, agent.n_actions, n)],
        rewards=rng.standard_normal(n),
        next_states=rng.standard_normal((n, STATE_DIM)),
        dones=np.zeros(n),
    )


def _uniform(agent):
    agent.policy.layers[-1].weight[...] = 0.0
    agent.policy.layers[-1].bias[...] = 0.0


class TestA2cAgent:
    """Tests for the discrete actor-critic."""

    def test_action_grid(self):
        """Test that ratios are evenly spaced over [-range, range]."""
        agent = A2cAgent(range_=0.5, n_actions=5, hidden=(8,))
        assert np.allclose(agent.alphas, [-0.5, -0.25, 0.0, 0.25, 0.5])

    def test_action_indices(self):
        """Test nearest-grid lookup of ratios."""
        agent = A2cAgent(n_actions=5, hidden=(8,))
        assert list(agent.action_indices([-1.0, 0.1, 0.6, 1.0])) == [0, 2, 3, 4]

    def test_uniform_policy_samples_every_action(self):
        """Test sampling from a uniform policy."""
        agent = A2cAgent(n_actions=4, hidden=(8,), seed=1)
        _uniform(agent)
        states = np.zeros((4000, STATE_DIM))
        assert np.allclose(agent.probabilities(states[:3]), 0.25)
        counts = np.bincount(agent.sample_actions(states), minlength=4)
        assert np.all(counts > 800)

    def test_uniform_policy_entropy(self):
        """Test that the reported entropy of a uniform policy is log(n)."""
        agent = A2cAgent(n_actions=4, hidden=(8,), seed=1)
        _uniform(agent)
        stats = a2c_update(agent, _batch(agent))
        assert stats['entropy'] == pytest.approx(np.log(4))

    def test_positive_advantage_raises_probability(self):
        """Test that a rewarded action becomes more likely."""
        agent = A2cAgent(n_actions=3, hidden=(8,), lr_policy=0.01, entropy=0.0, gamma=0.0, seed=2)
        _uniform(agent)
        agent.value.layers[-1].weight[...] = 0.0
        agent.value.layers[-1].bias[...] = 0.0
        state = np.zeros((1, STATE_DIM))
        batch = TransitionBatch(
            states=state, actions=np.array([1.0]), rewards=np.array([1.0]),
            next_states=state, dones=np.ones(1),
        )
        before = agent.probabilities(state)[0, 2]
        stats = agent.update(batch)
        assert stats['advantage'] == pytest.approx(1.0)
        assert agent.probabilities(state)[0, 2] > before

    def test_greedy_policy(self, env):
        """Test that the greedy policy picks the most probable ratio."""
        agent = A2cAgent(n_actions=5, hidden=(8,), seed=3)
        policy = agent.greedy_policy(RunningNormalizer())
        assert isinstance(policy, DiscretePolicy)
        state = env.reset(0)
        alphas = policy.act(state)
        assert alphas.shape == (2,)
        assert set(alphas) <= set(agent.alphas)

    def test_too_few_actions(self):
        """Test that a single discrete action is rejected."""
        with pytest.raises(AgentError):
            A2cAgent(n_actions=1)

    def test_empty_batch(self):
        """Test that an empty batch raises AgentError."""
        agent = A2cAgent(hidden=(8,))
        with pytest.raises(AgentError):
            agent.update(_batch(agent, n=0))
