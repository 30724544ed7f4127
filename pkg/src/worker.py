"""
Experiment Worker module for Leverage Bidder.
Trains one algorithm on one seed and writes its curve, checkpoint and summary.
"""

from __future__ import annotations

import os
import logging
from datetime import datetime
from typing import Optional

from .a2c import A2cAgent
from .cem import CemOptimizer
from .config import DEFAULT_HYPERPARAMETERS, parse_algorithm
from .ddpg import DdpgAgent
from .emulator import Emulator
from .exposure_fit import FittedExposureFn, build_env
from .market import STATE_DIM, MarketEnv
from .nn import DivergenceError, mlp_new
from .replay import ReplayMemory
from .reporting import CURVE_FIELDS, create_summary
from .storage import Storage, StorageError, save_checkpoint, write_csv_atomic
from .training import LearningCurve, cem_train, fixed_train, htlb_a2c_train, htlb_train

logger = logging.getLogger(__name__)


class WorkerError(Exception):
    """Worker operation error."""
    pass


class ExperimentWorker:
    """
    Worker that runs a single (algorithm, seed) training job.
    Builds its own environments and agent, so jobs share no state.
    """

    def __init__(
        self,
        algorithm: str,
        seed: int,
        base_path: str,
        env_config: dict,
        experiment_config: dict,
        fits: Optional[dict[int, FittedExposureFn]] = None
    ):
        """
        Initialize experiment worker.

        Args:
            algorithm: Algorithm name, e.g. 'htlb_ddpg' or 'fixed(0.5)'
            seed: Run seed
            base_path: Experiment output directory
            env_config: The 'environment' configuration section
            experiment_config: The 'experiment' configuration section
            fits: Exposure fits turning the environment into a replay environment
        """
        self.algorithm = algorithm
        self.kind, self.ratio = parse_algorithm(algorithm)
        self.seed = int(seed)
        self.env_config = env_config
        self.episodes = int(experiment_config['episodes'])
        self.eval_seeds = list(experiment_config['eval_seeds'])
        self.hyperparameters = experiment_config.get('hyperparameters') or DEFAULT_HYPERPARAMETERS
        self.fits = fits

        self.storage = Storage(base_path)
        self.errors = []
        self.start_time = None
        self.end_time = None

    def _error(self, kind: str, error: Exception) -> None:
        self.errors.append({
            'type': kind,
            'message': str(error),
            'timestamp': datetime.now().isoformat()
        })

    def _make_env(self) -> MarketEnv:
        return build_env(self.env_config, self.fits)

    def process(self) -> str:
        """
        Train, evaluate and persist the run.

        Returns:
            Path to summary.json file

        Raises:
            WorkerError: If the run directory or summary cannot be written
        """
        self.start_time = datetime.now()
        self.errors = []
        logger.info(f"Starting {self.algorithm} (seed {self.seed}, {self.episodes} episodes)")

        try:
            run_path = self.storage.create_run_directory(self.algorithm, self.seed)
        except StorageError as e:
            self._error('storage', e)
            raise WorkerError(f"Failed to create directory structure: {e}")

        status = None
        curve = None
        checkpoint_path = None
        try:
            env = self._make_env()
            eval_env = self._make_env()
            curve, manifest, networks = self._train(env, eval_env)
        except DivergenceError as e:
            status = 'diverged'
            self._error('divergence', e)
            logger.error(f"{self.algorithm} diverged on seed {self.seed}: {e}")
        except Exception as e:
            self._error('training', e)
            logger.error(f"Training error for {self.algorithm} seed {self.seed}: {e}")

        if curve is not None:
            try:
                write_csv_atomic(os.path.join(run_path, 'learning_curve.csv'), curve.rows(), CURVE_FIELDS)
                checkpoint_path = save_checkpoint(
                    self.storage.get_checkpoint_path(self.algorithm, self.seed), manifest, networks
                )
            except StorageError as e:
                self._error('storage', e)
                logger.error(f"Storage error for {self.algorithm} seed {self.seed}: {e}")

        self.end_time = datetime.now()
        try:
            summary_path = create_summary(
                run_path=run_path,
                algorithm=self.algorithm,
                seed=self.seed,
                curve=curve,
                status=status,
                checkpoint_path=checkpoint_path,
                errors=self.errors,
                start_time=self.start_time,
                end_time=self.end_time
            )
        except Exception as e:
            raise WorkerError(f"Failed to create summary: {e}")

        duration = (self.end_time - self.start_time).total_seconds()
        converged = f"{curve.converged():.2f}" if curve is not None else 'n/a'
        logger.info(
            f"Completed {self.algorithm} seed {self.seed}: converged test return {converged} in {duration:.2f}s"
        )
        return summary_path

    def _train(self, env: MarketEnv, eval_env: MarketEnv) -> tuple[LearningCurve, dict, dict]:
        """
        Run the training loop of the configured algorithm.

        Returns:
            Tuple of (learning curve, checkpoint manifest, networks by name)
        """
        common = {'eval_env': eval_env, 'eval_seeds': self.eval_seeds, 'seed': self.seed}
        manifest = {'algorithm': self.algorithm, 'seed': self.seed, 'range': env.range}

        if self.kind in ('manual', 'fixed'):
            alpha = self.ratio if self.kind == 'fixed' else 0.0
            curve = fixed_train(alpha, env, self.episodes, **common)
            return curve, {**manifest, 'policy': 'fixed', 'alpha': alpha}, {}

        if self.kind == 'cem':
            hp = self.hyperparameters['cem']
            actor = mlp_new([STATE_DIM, *hp['hidden'], 1], 'relu', 'tanh', self.seed)
            cem = CemOptimizer(
                actor.n_params,
                init_mean=actor.get_flat(),
                init_std=hp['init_std'],
                population=hp['population'],
                elite_frac=hp['elite_frac'],
                std_floor=hp['std_floor'],
                extra_std=hp['extra_std'],
                extra_decay=hp['extra_decay'],
                seed=self.seed,
            )
            curve = cem_train(actor, cem, env, self.episodes, env.range, **common)
            manifest.update(policy='actor', normalizer=env.normalizer.state_dict())
            return curve, manifest, {'actor': actor}

        if self.kind in ('ddpg', 'htlb_ddpg'):
            hp = self.hyperparameters['ddpg']
            agent = DdpgAgent(
                range_=env.range,
                hidden=tuple(hp['hidden']),
                gamma=env.gamma,
                tau=hp['tau'],
                lr_actor=hp['lr_actor'],
                lr_critic=hp['lr_critic'],
                l2_critic=hp['l2_critic'],
                seed=self.seed,
            )
            curve = htlb_train(
                agent, env, Emulator.from_env(env, seed=self.seed), self.episodes,
                expand=hp['expand'] if self.kind == 'htlb_ddpg' else 0,
                batch_size=hp['batch_size'],
                memory=ReplayMemory(hp['capacity']),
                ou_theta=hp['ou_theta'],
                ou_sigma=hp['ou_sigma'],
                noise_floor=hp['noise_floor'],
                updates_per_step=hp['updates_per_step'],
                **common,
            )
            manifest.update(policy='actor', normalizer=env.normalizer.state_dict())
            return curve, manifest, {'actor': agent.actor, 'critic': agent.critic}

        hp = self.hyperparameters['a2c']
        agent = A2cAgent(
            range_=env.range,
            n_actions=hp['n_actions'],
            hidden=tuple(hp['hidden']),
            gamma=env.gamma,
            lr_policy=hp['lr_policy'],
            lr_value=hp['lr_value'],
            entropy=hp['entropy'],
            seed=self.seed,
        )
        curve = htlb_a2c_train(
            agent, env, Emulator.from_env(env, seed=self.seed), self.episodes,
            expand=hp['expand'] if self.kind == 'htlb_a2c' else 0,
            **common,
        )
        manifest.update(
            policy='discrete', normalizer=env.normalizer.state_dict(), alphas=agent.alphas.tolist()
        )
        return curve, manifest, {'policy': agent.policy, 'value': agent.value}
