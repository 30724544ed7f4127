"""
Tests for replay module.
"""

import numpy as np
import pytest

from src.market import STATE_DIM, RunningNormalizer, Transition
from src.replay import OUProcess, ReplayError, ReplayMemory, flatten_transitions


def _transitions(env, n):
    out = []
    state = env.reset(0)
    for i in range(n):
        action = np.array([0.1 * i, -0.1 * i])
        next_state, _, done = env.step(action)
        out.append(Transition(state, action, env.info.weighted_increments, next_state, done))
        state = next_state
    return out


class TestReplayMemory:
    """Tests for the ring buffer."""

    def test_fifo_eviction(self):
        """Test that the oldest entries are dropped at capacity."""
        memory = ReplayMemory(3)
        memory.extend(range(5))
        assert len(memory) == 3
        assert sorted(memory.sample(3, np.random.default_rng(0))) == [2, 3, 4]

    def test_sample_without_replacement(self):
        """Test that samples are distinct and capped at the memory size."""
        memory = ReplayMemory(10)
        memory.extend(range(6))
        batch = memory.sample(20, np.random.default_rng(1))
        assert sorted(batch) == list(range(6))

    def test_empty_sample(self):
        """Test that sampling an empty memory raises ReplayError."""
        with pytest.raises(ReplayError) as exc_info:
            ReplayMemory(4).sample(1, np.random.default_rng(0))
        assert 'empty' in str(exc_info.value)

    def test_invalid_capacity(self):
        """Test that capacity must be positive."""
        with pytest.raises(ReplayError):
            ReplayMemory(0)


class TestOUProcess:
    """Tests for Ornstein-Uhlenbeck noise."""

    def test_reproducible(self):
        """Test that seeded processes agree."""
        a, b = OUProcess(3, seed=5), OUProcess(3, seed=5)
        assert np.array_equal(a.sample(), b.sample())

    def test_reset_to_mean(self):
        """Test that reset returns the state to mu."""
        ou = OUProcess(2, mu=0.3, seed=0)
        ou.sample()
        ou.reset()
        assert np.array_equal(ou.state, [0.3, 0.3])

    def test_mean_reversion_without_noise(self):
        """Test that zero sigma decays toward mu."""
        ou = OUProcess(1, theta=0.5, sigma=0.0, seed=0)
        ou.state = np.array([1.0])
        assert ou.sample()[0] == pytest.approx(0.5)


class TestFlattenTransitions:
    """Tests for per-product batches."""

    def test_rows_per_product(self, env):
        """Test one row per product and transition with scaled rewards."""
        transitions = _transitions(env, 3)
        batch = flatten_transitions(transitions, RunningNormalizer(), reward_scale=10.0)
        assert len(batch) == 6
        assert batch.states.shape == (6, STATE_DIM)
        assert np.array_equal(batch.actions[2:4], transitions[1].actions)
        assert np.allclose(batch.rewards[4:], transitions[2].rewards / 10.0)
        assert np.array_equal(batch.dones, [0, 0, 0, 0, 1, 1])

    def test_normalizer_applied(self, env):
        """Test that states are standardized at batch time."""
        transitions = _transitions(env, 2)
        normalizer = RunningNormalizer()
        raw = flatten_transitions(transitions, normalizer)
        normalizer.update(raw.states)
        standardized = flatten_transitions(transitions, normalizer)
        assert np.allclose(standardized.states, normalizer.transform(raw.states))

    def test_empty(self):
        """Test that no transitions give an empty batch."""
        batch = flatten_transitions([], RunningNormalizer())
        assert len(batch) == 0
        assert batch.states.shape == (0, STATE_DIM)
