"""
Tests for main module.
"""

import os
import tempfile
import numpy as np
import pytest

from src.curves import ExposureEffectFn
from src.exposure_fit import ExposureSample, cv_bandwidth, load_fits, write_samples_csv
from src.main import main, parse_args
from src.storage import read_csv, read_json, save_checkpoint

CONFIG = """\
environment:
  n_targets: 2
  n_competitors: 2
  horizon: 2
  requests: 100
  stochastic: false
experiment:
  algorithms: [manual]
  episodes: 1
  seeds: [0]
  eval_seeds: [10]
  output_dir: {output_dir}
  sweep_ratios: [0.5]
"""


@pytest.fixture
def workspace():
    """Temporary directory with a small configuration file."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = os.path.join(tmpdir, 'config.yaml')
        with open(config_path, 'w') as f:
            f.write(CONFIG.format(output_dir=os.path.join(tmpdir, 'runs')))
        yield tmpdir, config_path


class TestParseArgs:
    """Tests for command line parsing."""

    def test_run_defaults(self):
        """Test the defaults of the run subcommand."""
        args = parse_args(['run', 'config.yaml'])
        assert args.command == 'run'
        assert args.jobs is None
        assert args.seed_offset == 0

    def test_command_required(self):
        """Test that a subcommand is required."""
        with pytest.raises(SystemExit):
            parse_args([])

    def test_log_level_env(self, monkeypatch):
        """Test that the log level falls back to LEVERAGE_LOG_LEVEL."""
        monkeypatch.setenv('LEVERAGE_LOG_LEVEL', 'debug')
        assert parse_args(['compare', 'runs']).log_level == 'DEBUG'


class TestCommands:
    """Tests for subcommand exit codes and outputs."""

    def test_run_and_compare(self, workspace):
        """Test a run followed by a comparison of two algorithms."""
        tmpdir, config_path = workspace
        assert main(['run', config_path]) == 0
        assert main(['run', config_path, '--out', os.path.join(tmpdir, 'runs2')]) == 0
        assert os.path.exists(os.path.join(tmpdir, 'runs', 'manifest.json'))
        # A single algorithm cannot be compared
        assert main(['compare', os.path.join(tmpdir, 'runs')]) == 1

    def test_compare_empty(self, workspace):
        """Test that comparing an empty directory fails."""
        tmpdir, _ = workspace
        assert main(['compare', tmpdir]) == 1

    def test_missing_config(self):
        """Test that a missing configuration returns 1."""
        assert main(['run', '/nonexistent/config.yaml']) == 1

    def test_sweep(self, workspace):
        """Test the traffic sweep table."""
        tmpdir, config_path = workspace
        checkpoint = save_checkpoint(os.path.join(tmpdir, 'checkpoint'), {'policy': 'fixed', 'alpha': 1.0})
        assert main(['sweep', config_path, '--checkpoint', checkpoint, '--out', tmpdir]) == 0
        rows = read_csv(os.path.join(tmpdir, 'traffic_sweep.csv'))
        assert [row['policy'] for row in rows] == ['min_ratio', 'manual', 'fixed(0.5)', 'max_ratio', 'learned']
        assert rows[-1]['business_increment'] == rows[3]['business_increment']

    def test_report(self, workspace):
        """Test the per-product report next to the checkpoint."""
        tmpdir, config_path = workspace
        checkpoint = save_checkpoint(os.path.join(tmpdir, 'checkpoint'), {'policy': 'fixed', 'alpha': 0.0})
        assert main(['report', checkpoint, '--config', config_path]) == 0
        rows = read_csv(os.path.join(tmpdir, 'product_report.csv'))
        sidecar = read_json(os.path.join(tmpdir, 'product_report.json'))
        assert len(rows) == 2
        assert sidecar['summary']['above_0pct'] == 0

    def test_report_missing_checkpoint(self, workspace):
        """Test that a missing checkpoint returns 1."""
        tmpdir, config_path = workspace
        assert main(['report', os.path.join(tmpdir, 'none'), '--config', config_path]) == 1

    def test_dynamics(self, workspace):
        """Test the fixed-point, curve and phenomenon tables."""
        tmpdir, config_path = workspace
        out = os.path.join(tmpdir, 'analysis')
        assert main(['dynamics', config_path, '--out', out]) == 0
        for name in ('fixed_points.csv', 'curves.csv', 'phenomena.csv'):
            assert os.path.exists(os.path.join(out, name))
        assert len(read_csv(os.path.join(out, 'curves.csv'))) == 2 * 200
        assert read_json(os.path.join(out, 'phenomena.json'))['total_products'] == 2

    def test_fit(self, workspace):
        """Test fitting exposure curves from a sample file."""
        tmpdir, _ = workspace
        samples = {3: [ExposureSample(float(p), 0.2 + p / 1000.0) for p in range(0, 500, 50)]}
        samples_path = write_samples_csv(samples, os.path.join(tmpdir, 'samples.csv'))
        out = os.path.join(tmpdir, 'fits.json')
        assert main(['fit', samples_path, '--out', out, '--bandwidth', '40']) == 0
        fits = load_fits(out)
        assert fits[3].bandwidth == 40.0

    def test_fit_invalid_bandwidth(self, workspace):
        """Test that an unknown bandwidth rule returns 1."""
        tmpdir, _ = workspace
        assert main(['fit', os.path.join(tmpdir, 'samples.csv'), '--bandwidth', 'wide']) == 1

    def test_fit_missing_samples(self):
        """Test that a missing sample file returns 1."""
        assert main(['fit', '/nonexistent/samples.csv']) == 1

    def test_fit_defaults_to_cross_validation(self, workspace):
        """Test that the fit command cross-validates and tracks the generating curve."""
        tmpdir, _ = workspace
        curve = ExposureEffectFn(1200.0, 0.9, 0.1)
        grid = np.linspace(0.0, 3000.0, 200)
        samples = {0: [ExposureSample(float(p), float(curve(float(p)))) for p in grid]}
        samples_path = write_samples_csv(samples, os.path.join(tmpdir, 'samples.csv'))
        out = os.path.join(tmpdir, 'fits.json')
        assert main(['fit', samples_path, '--out', out]) == 0
        fit = load_fits(out)[0]
        assert fit.bandwidth == pytest.approx(cv_bandwidth(grid, curve(grid)))
        query = np.linspace(0.0, 3000.0, 57)
        assert float(np.sqrt(np.mean((fit(query) - curve(query)) ** 2))) < 0.02

    def test_collect_fit_and_replay_sweep(self, workspace):
        """Test logging samples, fitting them and sweeping on the replay environment."""
        tmpdir, config_path = workspace
        logs = os.path.join(tmpdir, 'logs')
        assert main(['collect', config_path, '--episodes', '3', '--ratio', '0.5', '--out', logs]) == 0
        episode_rows = read_csv(os.path.join(logs, 'episode.csv'))
        sample_rows = read_csv(os.path.join(logs, 'samples.csv'))
        assert len(episode_rows) == 2 * 3 * 3
        assert len(sample_rows) == len(episode_rows)
        assert read_json(os.path.join(logs, 'episode.json'))['stats']['episodes'] == 3

        fits_path = os.path.join(tmpdir, 'fits.json')
        assert main(['fit', os.path.join(logs, 'samples.csv'), '--out', fits_path]) == 0
        assert sorted(load_fits(fits_path)) == [0, 1]

        replay_config = os.path.join(tmpdir, 'replay.yaml')
        with open(config_path) as src, open(replay_config, 'w') as dst:
            dst.write(src.read() + "  exposure_fits: fits.json\n")
        checkpoint = save_checkpoint(os.path.join(tmpdir, 'checkpoint'), {'policy': 'fixed', 'alpha': 0.5})
        assert main(['sweep', replay_config, '--checkpoint', checkpoint, '--out', tmpdir]) == 0
        rows = read_csv(os.path.join(tmpdir, 'traffic_sweep.csv'))
        assert rows[-1]['policy'] == 'learned'

    def test_collect_from_checkpoint(self, workspace):
        """Test collecting with a saved policy."""
        tmpdir, config_path = workspace
        checkpoint = save_checkpoint(os.path.join(tmpdir, 'checkpoint'), {'policy': 'fixed', 'alpha': -1.0})
        logs = os.path.join(tmpdir, 'logs')
        assert main(['collect', config_path, '--checkpoint', checkpoint, '--episodes', '1', '--out', logs]) == 0
        rows = read_csv(os.path.join(logs, 'episode.csv'))
        assert {float(row['alpha']) for row in rows if row['t'] != '-1'} == {-1.0}

    def test_collect_invalid_episodes(self, workspace):
        """Test that a nonpositive episode count returns 1."""
        tmpdir, config_path = workspace
        assert main(['collect', config_path, '--episodes', '0', '--out', tmpdir]) == 1
