"""
Tests for episode_log module.
"""

import os
import tempfile
import numpy as np
import pytest

from src.episode_log import FIELDNAMES, EpisodeLog
from src.policies import FixedPolicy
from src.storage import read_csv, read_json


def _rollout(env, log, alpha, seed=0):
    log.attach(env)
    state = env.reset(seed)
    done = False
    while not done:
        state, _, done = env.step(FixedPolicy(alpha).act(state))


class TestEpisodeLog:
    """Tests for window rows and statistics."""

    def test_rows_per_window(self, env):
        """Test one row per target and window, warm-up included."""
        log = EpisodeLog('')
        _rollout(env, log, 0.5)
        assert len(log.rows) == (env.horizon + 1) * env.n_targets
        assert [row['t'] for row in log.rows[:2]] == [-1, -1]
        assert [row['t'] for row in log.rows[-2:]] == [env.horizon - 1] * 2

    def test_warmup_row_is_manual(self, env):
        """Test that the warm-up window reports no advertising change."""
        log = EpisodeLog('')
        _rollout(env, log, 1.0)
        warmup = [row for row in log.rows if row['t'] == -1]
        for row in warmup:
            assert row['alpha'] == 0.0
            assert row['pv_ad'] == row['pv_ad_baseline']
            assert row['reward'] == 0.0

    def test_scores_chain(self, env):
        """Test that each window's score is the previous window's next score."""
        log = EpisodeLog('')
        _rollout(env, log, 0.5)
        for pid in env.target_ids:
            rows = [row for row in log.rows if row['product'] == pid]
            for prev, row in zip(rows, rows[1:]):
                assert row['z'] == prev['z_next']

    def test_manual_stats(self, env):
        """Test that manual bids produce zero increments."""
        log = EpisodeLog('')
        _rollout(env, log, 0.0)
        stats = log.get_stats()
        assert stats['episodes'] == 1
        assert stats['windows'] == env.horizon + 1
        assert stats['products'] == env.target_ids
        assert stats['business_increment'] == 0.0
        assert stats['organic_increment'] == 0.0
        assert stats['total_reward'] == 0.0

    def test_episodes_counted(self, env):
        """Test that every reset starts a new episode."""
        log = EpisodeLog('')
        _rollout(env, log, 0.5, seed=0)
        _rollout(env, log, 0.5, seed=1)
        assert log.get_stats()['episodes'] == 2
        assert {row['episode'] for row in log.rows} == {0, 1}

    def test_positive_ratio_increments(self, env):
        """Test that raised bids add business impressions."""
        log = EpisodeLog('')
        _rollout(env, log, 1.0)
        assert log.get_stats()['business_increment'] > 0

    def test_empty_stats(self):
        """Test statistics of an empty log."""
        stats = EpisodeLog('').get_stats()
        assert stats['total_rows'] == 0
        assert stats['total_cost'] == 0.0


class TestGenerateFiles:
    """Tests for episode.csv and episode.json."""

    def test_generate_all(self, env):
        """Test that both files are written with every row."""
        with tempfile.TemporaryDirectory() as tmpdir:
            log = EpisodeLog(tmpdir)
            _rollout(env, log, 0.5)
            csv_path, json_path = log.generate_all()
            assert os.path.basename(csv_path) == 'episode.csv'
            rows = read_csv(csv_path)
            assert list(rows[0]) == ['episode'] + FIELDNAMES
            assert len(rows) == len(log.rows)
            data = read_json(json_path)
        assert data['stats']['total_rows'] == len(log.rows)
        assert data['rows'][0]['t'] == -1
        assert float(rows[-1]['alpha']) == pytest.approx(0.5)
        assert np.isfinite(data['stats']['total_cost'])
