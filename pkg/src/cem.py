"""
CEM module for Leverage Bidder.
Cross-entropy search over flattened policy parameters.
"""

from __future__ import annotations

import math
import logging
from typing import Callable, Optional

import numpy as np

from .policies import AgentError

logger = logging.getLogger(__name__)


class CemOptimizer:
    """
    Diagonal Gaussian search distribution refitted to the elite samples.

    extra_std adds variance that decays linearly to zero over extra_decay
    iterations (noisy CEM); the std never drops below std_floor.
    """

    def __init__(
        self,
        dim: int,
        init_mean: Optional[np.ndarray] = None,
        init_std: float = 0.1,
        population: int = 10,
        elite_frac: float = 0.2,
        std_floor: float = 1e-3,
        extra_std: float = 0.0,
        extra_decay: int = 0,
        seed: int = 0
    ):
        if population < 2:
            raise AgentError(f"Population must be at least 2, got {population}")
        if not 0.0 < elite_frac <= 1.0:
            raise AgentError(f"elite_frac must lie in (0, 1], got {elite_frac}")
        self.dim = dim
        self.mean = np.zeros(dim) if init_mean is None else np.array(init_mean, dtype=np.float64)
        self.std = np.full(dim, max(init_std, std_floor))
        self.population = population
        self.elite_frac = elite_frac
        self.std_floor = std_floor
        self.extra_std = extra_std
        self.extra_decay = extra_decay
        self.iteration = 0
        self.rng = np.random.default_rng(seed)

    @property
    def n_elite(self) -> int:
        return max(1, math.ceil(self.elite_frac * self.population))

    def ask(self) -> np.ndarray:
        return self.mean + self.std * self.rng.standard_normal((self.population, self.dim))

    def tell(self, samples: np.ndarray, scores: np.ndarray) -> None:
        """Refit mean and std to the highest-scoring samples."""
        scores = np.asarray(scores, dtype=np.float64)
        if not np.all(np.isfinite(scores)):
            raise AgentError("CEM received non-finite scores")
        elite = samples[np.argsort(-scores, kind='stable')[:self.n_elite]]
        self.mean = elite.mean(axis=0)
        variance = elite.var(axis=0)
        if self.extra_std > 0 and self.extra_decay > 0:
            remaining = max(0.0, 1.0 - self.iteration / self.extra_decay)
            variance = variance + (self.extra_std * remaining) ** 2
        self.std = np.maximum(np.sqrt(variance), self.std_floor)
        self.iteration += 1

    def iterate(self, evaluate: Callable[[np.ndarray], float]) -> np.ndarray:
        """
        Sample a population, score every member and refit.

        Returns:
            Scores of the sampled population
        """
        samples = self.ask()
        scores = np.array([evaluate(sample) for sample in samples], dtype=np.float64)
        self.tell(samples, scores)
        return scores


def cem_iterate(
    cem: CemOptimizer,
    evaluate: Callable[[np.ndarray], float],
    population: Optional[int] = None,
    elite_frac: Optional[float] = None
) -> CemOptimizer:
    """Run one CEM iteration, optionally overriding population and elite fraction."""
    if population is not None:
        if population < 2:
            raise AgentError(f"Population must be at least 2, got {population}")
        cem.population = population
    if elite_frac is not None:
        if not 0.0 < elite_frac <= 1.0:
            raise AgentError(f"elite_frac must lie in (0, 1], got {elite_frac}")
        cem.elite_frac = elite_frac
    cem.iterate(evaluate)
    return cem
