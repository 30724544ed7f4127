"""
Exposure fit module for Leverage Bidder.
Nadaraya-Watson estimation of exposure-effect curves from logged (exposure, next score) pairs.
"""

from __future__ import annotations

import os
import csv
import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .market import MarketEnv, Product
from .policies import Policy
from .episode_log import EpisodeLog
from .storage import write_csv_atomic, write_json_atomic

logger = logging.getLogger(__name__)

MIN_SAMPLES = 5
CV_GRID = np.logspace(-2.0, 0.5, 26)


class FitError(Exception):
    """Exposure fit error."""
    pass


@dataclass(frozen=True)
class ExposureSample:
    """Impressions p in one window and the average recommended score of the next."""
    p: float
    z_next: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.z_next)):
            raise FitError(f"Non-finite sample: {self}")
        if self.p < 0:
            raise FitError(f"Sample impressions must be nonnegative, got {self.p}")
        if not 0.0 <= self.z_next <= 1.0:
            raise FitError(f"Sample score must lie in [0, 1], got {self.z_next}")


def _nw_predict(train_p: np.ndarray, train_z: np.ndarray, bandwidth: float, query: np.ndarray) -> np.ndarray:
    """Gaussian-kernel weighted means, computed in log space."""
    log_w = -0.5 * ((query[:, None] - train_p[None, :]) / bandwidth) ** 2
    log_w -= logsumexp(log_w, axis=1, keepdims=True)
    return np.exp(log_w) @ train_z


class FittedExposureFn:
    """
    Kernel-weighted mean of training scores.

    Queries are clamped to the sample range so the curve stays flat beyond
    the data; predictions are clamped to [0, 1].
    """

    def __init__(self, bandwidth: float, p: np.ndarray, z: np.ndarray):
        if bandwidth <= 0 or not np.isfinite(bandwidth):
            raise FitError(f"Bandwidth must be positive, got {bandwidth}")
        self.bandwidth = float(bandwidth)
        self.p = np.asarray(p, dtype=np.float64)
        self.z = np.asarray(z, dtype=np.float64)

    def __call__(self, p):
        scalar = np.isscalar(p) or np.ndim(p) == 0
        query = np.clip(np.atleast_1d(np.asarray(p, dtype=np.float64)), self.p.min(), self.p.max())
        values = np.clip(_nw_predict(self.p, self.z, self.bandwidth, query), 0.0, 1.0)
        return float(values[0]) if scalar else values.reshape(np.shape(p))

    def to_dict(self) -> dict:
        return {'bandwidth': self.bandwidth, 'p': self.p.tolist(), 'z_next': self.z.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> FittedExposureFn:
        return cls(float(data['bandwidth']), np.array(data['p']), np.array(data['z_next']))


def silverman_bandwidth(p: np.ndarray) -> float:
    """Silverman's rule of thumb: 0.9 * min(std, IQR / 1.34) * n^(-1/5)."""
    p = np.asarray(p, dtype=np.float64)
    std = float(np.std(p, ddof=1))
    q75, q25 = np.percentile(p, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    bandwidth = 0.9 * spread * len(p) ** (-0.2)
    if bandwidth <= 0:
        # Degenerate exposures (all equal) still need a usable kernel width
        bandwidth = max(1.0, abs(float(p.mean())) * 1e-3)
    return bandwidth


def cv_bandwidth(p: np.ndarray, z: np.ndarray, grid: Optional[np.ndarray] = None) -> float:
    """Leave-one-out cross-validated bandwidth over multiples of the Silverman value."""
    base = silverman_bandwidth(p)
    candidates = base * (CV_GRID if grid is None else np.asarray(grid, dtype=np.float64))
    best, best_error = base, np.inf
    diff = p[:, None] - p[None, :]
    for h in candidates:
        log_w = -0.5 * (diff / h) ** 2
        np.fill_diagonal(log_w, -np.inf)
        finite_rows = np.isfinite(log_w).any(axis=1)
        if not finite_rows.all():
            continue
        log_w -= logsumexp(log_w, axis=1, keepdims=True)
        error = float(np.mean((np.exp(log_w) @ z - z) ** 2))
        if error < best_error:
            best, best_error = float(h), error
    return best


def fit_exposure(
    samples: Sequence[ExposureSample],
    bandwidth: Union[None, str, float] = None
) -> FittedExposureFn:
    """
    Fit a Nadaraya-Watson estimator with a Gaussian kernel.

    Args:
        samples: At least five (p, z_next) samples
        bandwidth: None or 'silverman' (default), 'cv', or an explicit width

    Returns:
        FittedExposureFn

    Raises:
        FitError: On fewer than five samples or an invalid bandwidth
    """
    if len(samples) < MIN_SAMPLES:
        raise FitError(f"Insufficient data: need at least {MIN_SAMPLES} samples, got {len(samples)}")
    p = np.array([s.p for s in samples], dtype=np.float64)
    z = np.array([s.z_next for s in samples], dtype=np.float64)

    if bandwidth is None or bandwidth == 'silverman':
        h = silverman_bandwidth(p)
    elif bandwidth == 'cv':
        h = cv_bandwidth(p, z)
    else:
        try:
            h = float(bandwidth)
        except (TypeError, ValueError):
            raise FitError(f"Invalid bandwidth: {bandwidth}")
    logger.debug(f"Fitted exposure curve on {len(samples)} samples with bandwidth {h:.4g}")
    return FittedExposureFn(h, p, z)


def eval_fit(f: FittedExposureFn, p: float) -> float:
    if p < 0:
        raise FitError(f"Exposure must be nonnegative, got {p}")
    return float(f(p))


def replay_env_from_fit(
    fits: dict[int, FittedExposureFn],
    env_config: dict,
    products: Optional[list[Product]] = None
) -> MarketEnv:
    """
    Environment whose exposure feedback uses the fitted curves.

    A fit is evaluated at organic + lambda * business impressions and already
    contains the advertising uplift of the logs it was fitted on.

    Raises:
        FitError: If a target product has no fit
    """
    env = MarketEnv(env_config, products=products, exposure_overrides=fits)
    missing = [pid for pid in env.target_ids if pid not in fits]
    if missing:
        raise FitError(f"Missing exposure fit for target products: {missing}")
    return env


def build_env(
    env_config: dict,
    fits: Optional[dict[int, FittedExposureFn]] = None,
    products: Optional[list[Product]] = None
) -> MarketEnv:
    """Replay environment when fits are given, parametric environment otherwise."""
    if fits:
        return replay_env_from_fit(fits, env_config, products=products)
    return MarketEnv(env_config, products=products)


def samples_from_rows(rows: Sequence[dict], leverage_lambda: float = 1.0) -> dict[int, list[ExposureSample]]:
    """Exposure samples from episode log rows, in row order per product."""
    samples: dict[int, list[ExposureSample]] = {}
    for row in rows:
        exposure = float(row['pv_rec']) + leverage_lambda * float(row['pv_ad'])
        samples.setdefault(int(row['product']), []).append(ExposureSample(exposure, float(row['z_next'])))
    return samples


def collect_exposure_samples(
    env: MarketEnv,
    policy: Policy,
    seeds: Sequence[int],
    log: Optional[EpisodeLog] = None
) -> dict[int, list[ExposureSample]]:
    """
    Roll out policy on env with an episode log attached and turn every
    logged window into an (organic + lambda * business, next score) sample.

    Pass a log to keep the window rows for episode.csv.
    """
    log = (log if log is not None else EpisodeLog('')).attach(env)
    try:
        for seed in seeds:
            state = env.reset(seed)
            done = False
            while not done:
                state, _, done = env.step(policy.act(state))
    finally:
        env.episode_log = None
    samples = {pid: [] for pid in env.target_ids}
    samples.update(samples_from_rows(log.rows, env.leverage_lambda))
    return samples


def write_samples_csv(samples: dict[int, list[ExposureSample]], path: str) -> str:
    rows = [
        {'product_id': pid, 'window': window, 'p': s.p, 'z_next': s.z_next}
        for pid, product_samples in sorted(samples.items())
        for window, s in enumerate(product_samples)
    ]
    return write_csv_atomic(path, rows, ['product_id', 'window', 'p', 'z_next'])


def load_samples_csv(path: str) -> dict[int, list[ExposureSample]]:
    """
    Read samples from a CSV with columns product_id, window, p, z_next.

    Raises:
        FitError: If the file is missing or malformed
    """
    if not os.path.exists(path):
        raise FitError(f"Sample file not found: {path}")
    samples: dict[int, list[ExposureSample]] = {}
    try:
        with open(path, 'r', newline='', encoding='utf-8') as f:
            rows = sorted(csv.DictReader(f), key=lambda r: (int(r['product_id']), int(r['window'])))
        for row in rows:
            samples.setdefault(int(row['product_id']), []).append(
                ExposureSample(float(row['p']), float(row['z_next']))
            )
    except (KeyError, ValueError) as e:
        raise FitError(f"Malformed sample file {path}: {e}")
    return samples


def save_fits(fits: dict[int, FittedExposureFn], path: str) -> str:
    return write_json_atomic(path, {str(pid): fit.to_dict() for pid, fit in sorted(fits.items())})


def load_fits(path: str) -> dict[int, FittedExposureFn]:
    """
    Read fits written by save_fits.

    Raises:
        FitError: If the file is missing or malformed
    """
    if not os.path.exists(path):
        raise FitError(f"Fit file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return {int(pid): FittedExposureFn.from_dict(fit) for pid, fit in data.items()}
    except (KeyError, ValueError) as e:
        raise FitError(f"Malformed fit file {path}: {e}")
