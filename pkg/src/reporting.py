"""
Reporting module for Leverage Bidder.
Generates run summaries, cross-seed learning curves, summary tables and digests.
"""

from __future__ import annotations

import os
import json
import hashlib
import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from .storage import Storage, StorageError, read_csv, read_json, write_csv_atomic, write_json_atomic, write_text_atomic
from .training import LearningCurve, converged_mean

logger = logging.getLogger(__name__)

# Expected converged ordering, best first
EXPECTED_ORDER = ('htlb_ddpg', 'ddpg', 'a2c', 'cem', 'manual')

CURVE_FIELDS = ['episode', 'test_return', 'train_return']
AGGREGATE_FIELDS = ['episode', 'test_mean', 'test_std', 'train_mean', 'train_std', 'seeds']
SUMMARY_FIELDS = ['algorithm', 'converged_mean', 'converged_std', 'seeds']


class ReportingError(Exception):
    """Reporting operation error."""
    pass


def write_table(path: str, rows: Sequence[dict], fieldnames: list[str], metadata: Optional[dict] = None) -> tuple[str, str]:
    """
    Write a CSV table and a JSON sidecar with its metadata.

    The CSV holds no timestamps; generated_at goes to the sidecar.

    Returns:
        Tuple of (csv_path, json_path)
    """
    json_path = os.path.splitext(path)[0] + '.json'
    try:
        write_csv_atomic(path, rows, fieldnames)
        write_json_atomic(json_path, {
            'generated_at': datetime.now().isoformat(),
            'columns': fieldnames,
            'rows': len(rows),
            **(metadata or {}),
        })
    except StorageError as e:
        raise ReportingError(f"Failed to write table {path}: {e}")
    return path, json_path


def create_summary(
    run_path: str,
    algorithm: str,
    seed: int,
    curve: Optional[LearningCurve] = None,
    status: Optional[str] = None,
    checkpoint_path: Optional[str] = None,
    errors: list[dict] = None,
    start_time: Optional[datetime] = None,
    end_time: Optional[datetime] = None
) -> str:
    """
    Create summary.json file with run statistics.

    Args:
        run_path: Run directory
        algorithm: Algorithm name
        seed: Run seed
        curve: Learning curve of the run
        status: Explicit status (default: success, or failed when errors exist)
        checkpoint_path: Path to the checkpoint directory
        errors: List of error dictionaries
        start_time: Processing start time
        end_time: Processing end time

    Returns:
        Path to summary.json file

    Raises:
        ReportingError: If summary creation fails
    """
    if errors is None:
        errors = []
    if status is None:
        status = 'success' if not errors else 'failed'

    summary = {
        'algorithm': algorithm,
        'seed': int(seed),
        'generated_at': datetime.now().isoformat(),
        'status': status,
        'statistics': {},
        'files': {},
        'processing': {},
    }

    if curve is not None and len(curve):
        summary['statistics'] = {
            'episodes': len(curve),
            'converged_test_return': curve.converged(),
            'final_test_return': curve.test_returns[-1],
            'mean_train_return': float(np.mean(curve.train_returns)),
        }
        summary['files']['learning_curve'] = 'learning_curve.csv'

    if checkpoint_path:
        summary['files']['checkpoint'] = os.path.relpath(checkpoint_path, run_path)

    if start_time:
        summary['processing']['start_time'] = start_time.isoformat()
    if end_time:
        summary['processing']['end_time'] = end_time.isoformat()
    if start_time and end_time:
        summary['processing']['duration_seconds'] = (end_time - start_time).total_seconds()

    if errors:
        summary['errors'] = errors
        summary['error_count'] = len(errors)

    summary_path = os.path.join(run_path, 'summary.json')
    try:
        write_json_atomic(summary_path, summary)
        logger.info(f"Created summary: {summary_path}")
        return summary_path
    except StorageError as e:
        raise ReportingError(f"Failed to create summary: {e}")


def format_summary_for_log(summary_path: str) -> str:
    """
    Format summary for logging output.

    Args:
        summary_path: Path to summary.json file

    Returns:
        Formatted summary string
    """
    try:
        with open(summary_path, 'r', encoding='utf-8') as f:
            summary = json.load(f)

        lines = [
            f"Algorithm: {summary.get('algorithm', 'N/A')}",
            f"Seed: {summary.get('seed', 'N/A')}",
            f"Status: {summary.get('status', 'N/A')}",
        ]
        stats = summary.get('statistics', {})
        if stats:
            lines.append(f"Episodes: {stats.get('episodes', 0)}")
            lines.append(f"Converged test return: {stats.get('converged_test_return', 0.0):.2f}")
        if summary.get('errors'):
            lines.append(f"Errors: {len(summary['errors'])}")
        return '\n'.join(lines)
    except Exception as e:
        return f"Failed to format summary: {e}"


def aggregate_summaries(summary_paths: list[str]) -> dict:
    """
    Aggregate run summaries into a single report.

    Args:
        summary_paths: List of paths to summary.json files

    Returns:
        Aggregated report dictionary
    """
    report = {
        'generated_at': datetime.now().isoformat(),
        'runs_processed': 0,
        'runs_successful': 0,
        'runs_diverged': 0,
        'runs_failed': 0,
        'total_errors': 0,
        'runs': [],
    }

    for summary_path in summary_paths:
        try:
            with open(summary_path, 'r', encoding='utf-8') as f:
                summary = json.load(f)

            report['runs_processed'] += 1
            status = summary.get('status')
            if status == 'success':
                report['runs_successful'] += 1
            elif status == 'diverged':
                report['runs_diverged'] += 1
            else:
                report['runs_failed'] += 1
            report['total_errors'] += summary.get('error_count', 0)

            report['runs'].append({
                'algorithm': summary.get('algorithm'),
                'seed': summary.get('seed'),
                'status': status,
                'converged_test_return': summary.get('statistics', {}).get('converged_test_return'),
            })
        except Exception as e:
            logger.error(f"Failed to read summary {summary_path}: {e}")

    return report


def aggregate_curves(curves: dict[int, list[dict]]) -> list[dict]:
    """
    Mean and standard deviation of learning curves across seeds.

    Only episodes present in every curve are kept.

    Args:
        curves: Curve rows (episode, test_return, train_return) per seed

    Returns:
        Rows with episode, test_mean, test_std, train_mean, train_std, seeds
    """
    if not curves:
        return []
    by_seed = {
        seed: {int(row['episode']): (float(row['test_return']), float(row['train_return'])) for row in rows}
        for seed, rows in curves.items()
    }
    episodes = sorted(set.intersection(*(set(points) for points in by_seed.values())))
    rows = []
    for episode in episodes:
        test = np.array([by_seed[s][episode][0] for s in sorted(by_seed)])
        train = np.array([by_seed[s][episode][1] for s in sorted(by_seed)])
        rows.append({
            'episode': episode,
            'test_mean': float(test.mean()),
            'test_std': float(test.std()),
            'train_mean': float(train.mean()),
            'train_std': float(train.std()),
            'seeds': len(by_seed),
        })
    return rows


def load_curves(output_dir: str, algorithm: str) -> dict[int, list[dict]]:
    """Learning-curve rows of every completed seed run of an algorithm."""
    storage = Storage(output_dir)
    curves = {}
    for seed in storage.list_seeds(algorithm):
        path = os.path.join(storage.get_run_path(algorithm, seed), 'learning_curve.csv')
        if os.path.exists(path):
            curves[seed] = read_csv(path)
    return curves


def write_algorithm_curve(output_dir: str, algorithm: str) -> Optional[str]:
    """
    Write the cross-seed learning curve of an algorithm.

    Returns:
        Path to the CSV, or None when no seed completed
    """
    curves = load_curves(output_dir, algorithm)
    if not curves:
        logger.warning(f"No completed runs for {algorithm}")
        return None
    path = os.path.join(Storage(output_dir).get_algorithm_path(algorithm), 'learning_curve.csv')
    csv_path, _ = write_table(
        path, aggregate_curves(curves), AGGREGATE_FIELDS,
        {'algorithm': algorithm, 'seeds': sorted(curves)},
    )
    return csv_path


@dataclass
class SummaryRow:
    algorithm: str
    converged_mean: float
    converged_std: float
    per_seed: dict[int, float] = field(default_factory=dict)

    @property
    def seeds(self) -> int:
        return len(self.per_seed)

    def to_dict(self) -> dict:
        return {
            'algorithm': self.algorithm,
            'converged_mean': self.converged_mean,
            'converged_std': self.converged_std,
            'seeds': self.seeds,
        }


@dataclass
class SummaryTable:
    """Converged performance per algorithm, best first."""
    rows: list[SummaryRow] = field(default_factory=list)
    absent: list[str] = field(default_factory=list)

    def get(self, algorithm: str) -> Optional[SummaryRow]:
        for row in self.rows:
            if row.algorithm == algorithm:
                return row
        return None

    def to_rows(self) -> list[dict]:
        return [row.to_dict() for row in self.rows]


def ordering_report(table: SummaryTable, expected: Sequence[str] = EXPECTED_ORDER) -> dict:
    """
    Check per seed whether converged returns follow the expected order.

    Algorithms without runs are skipped and listed as absent; a seed is
    checked only when every present algorithm has it.
    """
    present = [name for name in expected if table.get(name) is not None]
    absent = [name for name in expected if table.get(name) is None]
    common = sorted(set.intersection(*(set(table.get(n).per_seed) for n in present))) if present else []

    per_seed = {}
    for seed in common:
        values = [table.get(name).per_seed[seed] for name in present]
        per_seed[seed] = all(a >= b for a, b in zip(values, values[1:]))

    held = sum(per_seed.values())
    return {
        'expected_order': present,
        'absent': absent,
        'seeds': {str(seed): ok for seed, ok in per_seed.items()},
        'held': held,
        'checked': len(per_seed),
    }


def compare_algorithms(output_dir: str, fraction: float = 0.1) -> tuple[SummaryTable, dict]:
    """
    Build the converged-performance table of an experiment directory.

    Converged performance of a seed is the mean test return over the final
    ceil(fraction * episodes) episodes.

    Args:
        output_dir: Experiment output directory
        fraction: Final fraction of episodes used for convergence

    Returns:
        Tuple of (SummaryTable sorted descending, ordering report)

    Raises:
        ReportingError: If fewer than two algorithms have completed runs
    """
    storage = Storage(output_dir)
    table = SummaryTable()
    for algorithm in storage.list_algorithms():
        curves = load_curves(output_dir, algorithm)
        if not curves:
            continue
        per_seed = {
            seed: converged_mean([float(r['test_return']) for r in rows], fraction)
            for seed, rows in sorted(curves.items())
        }
        values = np.array(list(per_seed.values()))
        table.rows.append(SummaryRow(algorithm, float(values.mean()), float(values.std()), per_seed))

    if len(table.rows) < 2:
        raise ReportingError(
            f"Need completed runs for at least two algorithms in {output_dir}, found {len(table.rows)}"
        )
    table.rows.sort(key=lambda r: (-r.converged_mean, r.algorithm))
    table.absent = [name for name in EXPECTED_ORDER if table.get(name) is None]
    report = ordering_report(table)
    logger.info(
        f"Ordering held in {report['held']} of {report['checked']} seeds; absent: {report['absent'] or 'none'}"
    )
    return table, report


def write_summary_table(output_dir: str, table: SummaryTable, report: dict) -> tuple[str, str]:
    return write_table(
        os.path.join(output_dir, 'summary_table.csv'),
        table.to_rows(),
        SUMMARY_FIELDS,
        {'ordering': report, 'absent': table.absent},
    )


def calculate_sha256(filepath: str) -> str:
    """
    Calculate SHA256 hash of a file.

    Args:
        filepath: Path to file

    Returns:
        SHA256 hash as hexadecimal string
    """
    sha256_hash = hashlib.sha256()

    with open(filepath, 'rb') as f:
        for chunk in iter(lambda: f.read(8192), b''):
            sha256_hash.update(chunk)

    return sha256_hash.hexdigest()


def create_digest(output_dir: str, paths: Sequence[str]) -> str:
    """
    Create digest.sha256 listing the hash of every given file.

    Lines are '<sha256>  <path relative to output_dir>', sorted by path.

    Raises:
        ReportingError: If a file cannot be read
    """
    lines = []
    try:
        for path in sorted(os.path.relpath(p, output_dir) for p in paths):
            digest = calculate_sha256(os.path.join(output_dir, path))
            lines.append(f"{digest}  {path.replace(os.sep, '/')}\n")
        digest_path = write_text_atomic(os.path.join(output_dir, 'digest.sha256'), ''.join(lines))
    except (OSError, StorageError) as e:
        raise ReportingError(f"Failed to create digest: {e}")
    logger.info(f"Created digest: {digest_path}")
    return digest_path


def verify_digest(digest_path: str) -> bool:
    """
    Verify every file listed in a digest.

    Returns:
        True if all hashes match
    """
    base = os.path.dirname(digest_path)
    try:
        with open(digest_path, 'r', encoding='utf-8') as f:
            entries = [line.split(None, 1) for line in f if line.strip()]
        for expected, name in entries:
            if calculate_sha256(os.path.join(base, name.strip())) != expected:
                logger.error(f"Digest mismatch: {name.strip()}")
                return False
        return True
    except OSError as e:
        logger.error(f"Digest verification failed: {e}")
        return False


def load_summary(run_path: str) -> dict:
    return read_json(os.path.join(run_path, 'summary.json'))
