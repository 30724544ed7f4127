"""
Tests for emulator module.
"""

import numpy as np
import pytest

from src.emulator import Emulator, EmulatorError, HybridTransition
from src.market import Transition
from tests.fixtures import make_env

ACTION_GRID = np.linspace(-1.0, 1.0, 21)


class TestSimulateO:
    """Tests for the advertising emulator."""

    def test_matches_noise_free_environment(self):
        """Test that the expected emulator reproduces the environment's o' exactly."""
        prefixes = ([], [[0.2, -0.4]], [[0.2, -0.4], [1.0, 0.0]], [[0.2, -0.4], [1.0, 0.0], [-0.3, 0.7]])
        emulator = Emulator.from_env(make_env(horizon=5))
        checked = 0
        for prefix in prefixes:
            for alpha in ACTION_GRID:
                for action in (np.full(2, alpha), np.array([alpha, -alpha])):
                    env = make_env(horizon=5)
                    state = env.reset(4)
                    for past in prefix:
                        state, _, _ = env.step(np.array(past))
                    simulated = emulator.simulate_o(state, action)
                    real = env.step(action)[0].o
                    assert np.array_equal(simulated.pv_ad, real.pv_ad)
                    assert np.array_equal(simulated.click_ad, real.click_ad)
                    assert np.array_equal(simulated.cost, real.cost)
                    assert np.array_equal(simulated.prev_pv_ad, real.prev_pv_ad)
                    checked += 1
        assert checked == len(prefixes) * len(ACTION_GRID) * 2

    def test_static_fields_copied(self, env):
        """Test that product attributes carry over from the state."""
        state = env.reset(0)
        o = Emulator.from_env(env).simulate_o(state, np.zeros(2))
        assert o.product_ids == state.o.product_ids
        assert np.array_equal(o.bid, state.o.bid)

    def test_wrong_action_size(self, env):
        """Test that actions must cover every target."""
        state = env.reset(0)
        with pytest.raises(EmulatorError) as exc_info:
            Emulator.from_env(env).simulate_o(state, np.zeros(3))
        assert 'expected 2' in str(exc_info.value)

    def test_sampled_mode_requires_rng(self, env):
        """Test that the sampled emulator needs a generator."""
        state = env.reset(0)
        emulator = Emulator.from_env(env, expected=False)
        with pytest.raises(EmulatorError):
            emulator.simulate_o(state, np.zeros(2))
        o = emulator.simulate_o(state, np.zeros(2), rng=np.random.default_rng(0))
        assert o.pv_ad.shape == (2,)

    def test_pctr_noise_changes_outcome(self, env):
        """Test that the fidelity knob perturbs the emulated auction."""
        state = env.reset(0)
        exact = Emulator.from_env(env).simulate_o(state, np.zeros(2))
        noisy = Emulator.from_env(env, pctr_noise=0.02, seed=1).simulate_o(state, np.zeros(2))
        assert not np.array_equal(exact.click_ad, noisy.click_ad)


class TestExpandTransition:
    """Tests for hybrid transition construction."""

    def _transition(self, env):
        state = env.reset(0)
        action = np.array([0.3, -0.2])
        next_state, _, done = env.step(action)
        return Transition(state, action, env.info.weighted_increments, next_state, done)

    def test_hybrid_shares_real_x(self, env):
        """Test that hybrids keep the logged x-part, reward and done flag."""
        transition = self._transition(env)
        emulator = Emulator.from_env(env)
        candidates = [np.array([1.0, 1.0]), np.array([-1.0, 0.5])]
        hybrids = emulator.expand_transition(transition, 2, lambda tr, m: candidates[m])
        assert len(hybrids) == 2
        for hybrid, action in zip(hybrids, candidates):
            assert isinstance(hybrid, HybridTransition)
            assert hybrid.hybrid
            assert hybrid.next_state.x is transition.next_state.x
            assert hybrid.rewards is transition.rewards
            assert hybrid.done == transition.done
            assert np.array_equal(hybrid.actions, action)
            expected_o = emulator.simulate_o(transition.state, action)
            assert np.array_equal(hybrid.next_state.o.pv_ad, expected_o.pv_ad)

    def test_actions_clamped(self, env):
        """Test that sampled actions are clamped to range."""
        transition = self._transition(env)
        hybrids = Emulator.from_env(env).expand_transition(transition, 1, lambda tr, m: np.array([5.0, -5.0]))
        assert np.array_equal(hybrids[0].actions, [1.0, -1.0])

    def test_zero_expansion(self, env):
        """Test that M = 0 produces no hybrids."""
        transition = self._transition(env)
        assert Emulator.from_env(env).expand_transition(transition, 0, lambda tr, m: tr.actions) == []

    def test_negative_expansion(self, env):
        """Test that negative M is rejected."""
        transition = self._transition(env)
        with pytest.raises(EmulatorError):
            Emulator.from_env(env).expand_transition(transition, -1, lambda tr, m: tr.actions)
