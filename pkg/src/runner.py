"""
Runner module for Leverage Bidder.
Runs every (algorithm, seed) job of an experiment and aggregates the results.
"""

from __future__ import annotations

import os
import logging
from datetime import datetime
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Optional

from .config import config_hash, load_config
from .exposure_fit import load_fits
from .reporting import aggregate_summaries, create_digest, format_summary_for_log, write_algorithm_curve
from .storage import Storage, write_json_atomic
from .worker import ExperimentWorker, WorkerError

logger = logging.getLogger(__name__)


class RunnerError(Exception):
    """Runner operation error."""
    pass


class ExperimentRunner:
    """
    Experiment runner.
    Trains all configured algorithms on all seeds with a pool of workers.
    """

    def __init__(
        self,
        config: dict = None,
        config_path: str = None,
        output_dir: Optional[str] = None,
        jobs: Optional[int] = None,
        seed_offset: int = 0
    ):
        """
        Initialize runner.

        Args:
            config: Configuration dictionary (optional)
            config_path: Path to configuration file (optional)
            output_dir: Output directory (default: experiment.output_dir)
            jobs: Parallel jobs (default: experiment.jobs)
            seed_offset: Added to every configured training seed
        """
        if config:
            self.config = config
        else:
            self.config = load_config(config_path)
        self.config_path = config_path

        self.env_config = self.config['environment']
        self.experiment = self.config['experiment']
        self.output_dir = output_dir or self.experiment['output_dir']
        self.jobs = int(jobs or self.experiment.get('jobs', 1))
        self.algorithms = list(self.experiment['algorithms'])
        self.seeds = [int(s) + seed_offset for s in self.experiment['seeds']]
        self.report: dict = {}

    def _load_fits(self):
        path = self.experiment.get('exposure_fits')
        if not path:
            return None
        logger.info(f"Using replay environment from exposure fits {path}")
        return load_fits(path)

    def run(self) -> str:
        """
        Run every job, then write curves, manifest and digest.

        Returns:
            Path to the experiment output directory
        """
        start_time = datetime.now()
        fits = self._load_fits()
        jobs = [(algorithm, seed) for algorithm in self.algorithms for seed in self.seeds]

        logger.info(f"Starting experiment: {len(self.algorithms)} algorithms x {len(self.seeds)} seeds")
        logger.info(f"Processing {len(jobs)} runs with {self.jobs} workers")

        summary_paths = {}
        with ThreadPoolExecutor(max_workers=self.jobs) as executor:
            futures = {}

            for algorithm, seed in jobs:
                worker = ExperimentWorker(
                    algorithm=algorithm,
                    seed=seed,
                    base_path=self.output_dir,
                    env_config=self.env_config,
                    experiment_config=self.experiment,
                    fits=fits
                )
                future = executor.submit(worker.process)
                futures[future] = (algorithm, seed)

            for future in as_completed(futures):
                algorithm, seed = futures[future]
                try:
                    summary_path = future.result()
                    summary_paths[(algorithm, seed)] = summary_path
                    logger.info(f"Completed: {algorithm} seed {seed}\n{format_summary_for_log(summary_path)}")
                except WorkerError as e:
                    logger.error(f"Worker error for {algorithm} seed {seed}: {e}")
                except Exception as e:
                    logger.error(f"Unexpected error for {algorithm} seed {seed}: {e}")

        # Seed order keeps every aggregate independent of completion order
        ordered = [summary_paths[job] for job in jobs if job in summary_paths]
        self.report = aggregate_summaries(ordered)

        metric_paths = []
        storage = Storage(self.output_dir)
        for algorithm in self.algorithms:
            for seed in self.seeds:
                path = os.path.join(storage.get_run_path(algorithm, seed), 'learning_curve.csv')
                if os.path.exists(path):
                    metric_paths.append(path)
            aggregate = write_algorithm_curve(self.output_dir, algorithm)
            if aggregate:
                metric_paths.append(aggregate)

        end_time = datetime.now()
        manifest = {
            'generated_at': end_time.isoformat(),
            'config_path': self.config_path,
            'config_sha256': config_hash(self.config_path) if self.config_path else None,
            'config': self.config,
            'algorithms': self.algorithms,
            'seeds': self.seeds,
            'wall_time_seconds': (end_time - start_time).total_seconds(),
            'runs': self.report,
        }
        write_json_atomic(os.path.join(self.output_dir, 'manifest.json'), manifest)
        create_digest(self.output_dir, metric_paths)

        logger.info(
            f"Experiment completed: "
            f"{self.report['runs_successful']}/{self.report['runs_processed']} successful, "
            f"{self.report['runs_diverged']} diverged"
        )
        return self.output_dir


def run_experiment(
    config_path: str,
    output_dir: Optional[str] = None,
    jobs: Optional[int] = None,
    seed_offset: int = 0
) -> str:
    """
    Run the experiment described by a configuration file.

    Returns:
        Path to the artifact directory

    Raises:
        ConfigError: If the configuration is invalid
    """
    runner = ExperimentRunner(
        config_path=config_path, output_dir=output_dir, jobs=jobs, seed_offset=seed_offset
    )
    return runner.run()
