"""
Tests for reporting module.
"""

import os
import json
import tempfile
from datetime import datetime, timedelta
import pytest

from src.reporting import (
    CURVE_FIELDS,
    ReportingError,
    SummaryRow,
    SummaryTable,
    aggregate_curves,
    aggregate_summaries,
    calculate_sha256,
    compare_algorithms,
    create_digest,
    create_summary,
    format_summary_for_log,
    load_summary,
    ordering_report,
    verify_digest,
    write_algorithm_curve,
    write_summary_table,
)
from src.storage import Storage, read_csv, read_json, write_csv_atomic
from src.training import LearningCurve


def _write_curve(output_dir, algorithm, seed, test_returns):
    run_path = Storage(output_dir).create_run_directory(algorithm, seed)
    rows = [
        {'episode': i, 'test_return': value, 'train_return': value / 2}
        for i, value in enumerate(test_returns)
    ]
    write_csv_atomic(os.path.join(run_path, 'learning_curve.csv'), rows, CURVE_FIELDS)
    return run_path


class TestCreateSummary:
    """Tests for run summaries."""

    def test_success_with_curve(self):
        """Test statistics and files of a completed run."""
        curve = LearningCurve()
        for episode, value in enumerate([1.0, 2.0, 3.0]):
            curve.add(episode, value, value - 1)
        with tempfile.TemporaryDirectory() as tmpdir:
            start = datetime(2024, 1, 1, 12, 0, 0)
            path = create_summary(
                tmpdir, 'htlb_ddpg', 4, curve=curve,
                checkpoint_path=os.path.join(tmpdir, 'checkpoint'),
                start_time=start, end_time=start + timedelta(seconds=30),
            )
            summary = load_summary(tmpdir)
        assert os.path.basename(path) == 'summary.json'
        assert summary['status'] == 'success'
        assert summary['seed'] == 4
        assert summary['statistics']['episodes'] == 3
        assert summary['statistics']['converged_test_return'] == 3.0
        assert summary['files'] == {'learning_curve': 'learning_curve.csv', 'checkpoint': 'checkpoint'}
        assert summary['processing']['duration_seconds'] == 30.0

    def test_failed_with_errors(self):
        """Test that errors mark the run failed."""
        errors = [{'type': 'ValueError', 'message': 'bad', 'timestamp': '2024-01-01T00:00:00'}]
        with tempfile.TemporaryDirectory() as tmpdir:
            create_summary(tmpdir, 'cem', 0, errors=errors)
            summary = load_summary(tmpdir)
        assert summary['status'] == 'failed'
        assert summary['error_count'] == 1
        assert summary['statistics'] == {}

    def test_explicit_status(self):
        """Test that an explicit status wins."""
        with tempfile.TemporaryDirectory() as tmpdir:
            create_summary(tmpdir, 'ddpg', 1, status='diverged', errors=[{'type': 'DivergenceError'}])
            assert load_summary(tmpdir)['status'] == 'diverged'

    def test_format_for_log(self):
        """Test the log rendering of a summary."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = create_summary(tmpdir, 'manual', 2)
            text = format_summary_for_log(path)
        assert 'Algorithm: manual' in text
        assert 'Status: success' in text

    def test_format_missing_file(self):
        """Test that an unreadable summary is reported, not raised."""
        assert format_summary_for_log('/nonexistent/summary.json').startswith('Failed to format summary')


class TestAggregateSummaries:
    """Tests for the experiment report."""

    def test_counts(self):
        """Test status counts over several runs."""
        with tempfile.TemporaryDirectory() as tmpdir:
            paths = []
            for name, kwargs in [
                ('a', {}),
                ('b', {'status': 'diverged', 'errors': [{'type': 'DivergenceError'}]}),
                ('c', {'errors': [{'type': 'X'}, {'type': 'Y'}]}),
            ]:
                run_path = os.path.join(tmpdir, name)
                os.makedirs(run_path)
                paths.append(create_summary(run_path, name, 0, **kwargs))
            paths.append(os.path.join(tmpdir, 'missing.json'))
            report = aggregate_summaries(paths)
        assert report['runs_processed'] == 3
        assert report['runs_successful'] == 1
        assert report['runs_diverged'] == 1
        assert report['runs_failed'] == 1
        assert report['total_errors'] == 3
        assert [run['algorithm'] for run in report['runs']] == ['a', 'b', 'c']


class TestCurves:
    """Tests for cross-seed learning curves."""

    def test_aggregate_intersection(self):
        """Test mean and population std over episodes common to all seeds."""
        curves = {
            0: [{'episode': '0', 'test_return': '1.0', 'train_return': '0.0'},
                {'episode': '1', 'test_return': '3.0', 'train_return': '0.0'}],
            1: [{'episode': '0', 'test_return': '3.0', 'train_return': '2.0'}],
        }
        rows = aggregate_curves(curves)
        assert len(rows) == 1
        assert rows[0]['test_mean'] == 2.0
        assert rows[0]['test_std'] == 1.0
        assert rows[0]['train_mean'] == 1.0
        assert rows[0]['seeds'] == 2

    def test_aggregate_empty(self):
        """Test that no curves give no rows."""
        assert aggregate_curves({}) == []

    def test_write_algorithm_curve(self):
        """Test the per-algorithm curve and its sidecar."""
        with tempfile.TemporaryDirectory() as tmpdir:
            _write_curve(tmpdir, 'cem', 0, [1.0, 2.0])
            _write_curve(tmpdir, 'cem', 1, [3.0, 4.0])
            path = write_algorithm_curve(tmpdir, 'cem')
            rows = read_csv(path)
            sidecar = read_json(os.path.splitext(path)[0] + '.json')
            assert write_algorithm_curve(tmpdir, 'a2c') is None
        assert [float(r['test_mean']) for r in rows] == [2.0, 3.0]
        assert sidecar['seeds'] == [0, 1]
        assert 'generated_at' in sidecar


class TestCompareAlgorithms:
    """Tests for the converged-performance table."""

    def test_table_sorted(self):
        """Test converged means over the final tenth of episodes, best first."""
        with tempfile.TemporaryDirectory() as tmpdir:
            _write_curve(tmpdir, 'manual', 0, [0.0] * 10)
            _write_curve(tmpdir, 'htlb_ddpg', 0, [0.0] * 9 + [5.0])
            _write_curve(tmpdir, 'htlb_ddpg', 1, [0.0] * 9 + [7.0])
            table, report = compare_algorithms(tmpdir)
            csv_path, json_path = write_summary_table(tmpdir, table, report)
            rows = read_csv(csv_path)
            sidecar = read_json(json_path)
        assert [row.algorithm for row in table.rows] == ['htlb_ddpg', 'manual']
        assert table.get('htlb_ddpg').converged_mean == 6.0
        assert table.get('htlb_ddpg').converged_std == 1.0
        assert 'a2c' in table.absent
        assert report['held'] == 1
        assert report['checked'] == 1
        assert rows[0]['seeds'] == '2'
        assert sidecar['ordering']['expected_order'] == ['htlb_ddpg', 'manual']

    def test_needs_two_algorithms(self):
        """Test that a single algorithm cannot be compared."""
        with tempfile.TemporaryDirectory() as tmpdir:
            _write_curve(tmpdir, 'manual', 0, [0.0])
            with pytest.raises(ReportingError) as exc_info:
                compare_algorithms(tmpdir)
        assert 'at least two' in str(exc_info.value)

    def test_ordering_violation(self):
        """Test that a seed breaking the expected order is reported."""
        table = SummaryTable([
            SummaryRow('manual', 1.0, 0.0, {0: 1.0, 1: 1.0}),
            SummaryRow('ddpg', 0.5, 1.5, {0: 2.0, 1: -1.0}),
            SummaryRow('cem', 0.0, 0.0, {0: 0.0}),
        ])
        report = ordering_report(table)
        assert report['expected_order'] == ['ddpg', 'cem', 'manual']
        assert report['seeds'] == {'0': False}
        assert report['absent'] == ['htlb_ddpg', 'a2c']


class TestDigest:
    """Tests for digest files."""

    def test_create_and_verify(self):
        """Test that the digest lists sorted relative paths and verifies."""
        with tempfile.TemporaryDirectory() as tmpdir:
            files = []
            for name in ('b.txt', os.path.join('sub', 'a.txt')):
                path = os.path.join(tmpdir, name)
                os.makedirs(os.path.dirname(path), exist_ok=True)
                with open(path, 'w') as f:
                    f.write(name)
                files.append(path)
            digest_path = create_digest(tmpdir, files)
            with open(digest_path) as f:
                lines = f.read().splitlines()
            assert [line.split('  ')[1] for line in lines] == ['b.txt', 'sub/a.txt']
            assert lines[0].split('  ')[0] == calculate_sha256(files[0])
            assert verify_digest(digest_path)

            with open(files[1], 'a') as f:
                f.write('tampered')
            assert not verify_digest(digest_path)

    def test_missing_file(self):
        """Test that a digest over a missing file raises ReportingError."""
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(ReportingError):
                create_digest(tmpdir, [os.path.join(tmpdir, 'missing.txt')])

    def test_sha256_known_value(self):
        """Test the hash of a known content."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, 'hello.txt')
            with open(path, 'wb') as f:
                f.write(b'hello')
            assert calculate_sha256(path) == '2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824'
