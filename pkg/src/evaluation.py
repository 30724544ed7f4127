"""
Evaluation module for Leverage Bidder.
Paired-baseline rollouts, the business-traffic sweep and per-product reports.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import SweepRow, bid_ratio_sweep
from .exposure_fit import build_env
from .market import MarketEnv
from .policies import Policy, load_policy

logger = logging.getLogger(__name__)


class EvaluationError(Exception):
    """Evaluation error."""
    pass


@dataclass
class RolloutStats:
    """Episode totals of a policy against its paired manual rollout, averaged over seeds."""
    business_increment: float
    organic_increment: float
    business_increment_std: float
    organic_increment_std: float
    organic_policy: np.ndarray
    organic_baseline: np.ndarray
    returns: list[float]


def rollout_increments(env: MarketEnv, policy: Policy, seeds: Sequence[int]) -> RolloutStats:
    """
    Run one episode per seed and accumulate business and organic increments.

    Per-product organic totals are averaged over seeds.
    """
    if not seeds:
        raise EvaluationError("At least one seed is required")
    business, organic, returns = [], [], []
    organic_policy = np.zeros(env.n_targets)
    organic_baseline = np.zeros(env.n_targets)
    for seed in seeds:
        state = env.reset(seed)
        done = False
        business_total = organic_total = episode_return = 0.0
        while not done:
            state, reward, done = env.step(policy.act(state))
            info = env.info
            business_total += float(np.sum(info.business_pv - info.business_pv_baseline))
            organic_total += float(np.sum(info.organic_pv - info.organic_pv_baseline))
            organic_policy += info.organic_pv
            organic_baseline += info.organic_pv_baseline
            episode_return += reward
        business.append(business_total)
        organic.append(organic_total)
        returns.append(episode_return)
    n = len(seeds)
    return RolloutStats(
        business_increment=float(np.mean(business)),
        organic_increment=float(np.mean(organic)),
        business_increment_std=float(np.std(business)),
        organic_increment_std=float(np.std(organic)),
        organic_policy=organic_policy / n,
        organic_baseline=organic_baseline / n,
        returns=returns,
    )


def traffic_sweep(
    env_config: dict,
    checkpoint_dir: str,
    seeds: Sequence[int],
    products=None,
    ratios: Optional[Sequence[float]] = None,
    fits=None
) -> list[SweepRow]:
    """
    Business and organic increments of min-ratio, manual, max-ratio and learned policies.

    Extra constant ratios may be added through `ratios`. With exposure fits
    every policy runs on the replay environment the learned one trained on.

    Raises:
        EvaluationError: If the checkpoint cannot be loaded
    """
    env = build_env(env_config, fits, products)
    try:
        learned = load_policy(checkpoint_dir)
    except Exception as e:
        raise EvaluationError(f"Failed to load checkpoint {checkpoint_dir}: {e}")

    sweep = sorted({-env.range, 0.0, env.range, *(float(r) for r in (ratios or []))})
    rows = bid_ratio_sweep(env_config, sweep, seeds, products=env.products, fits=fits)
    names = {-env.range: 'min_ratio', 0.0: 'manual', env.range: 'max_ratio'}
    for row in rows:
        row.policy = names.get(row.ratio, row.policy)

    stats = rollout_increments(env, learned, seeds)
    rows.append(SweepRow(
        policy='learned',
        ratio=None,
        business_increment=stats.business_increment,
        organic_increment=stats.organic_increment,
        business_increment_std=stats.business_increment_std,
        organic_increment_std=stats.organic_increment_std,
    ))
    logger.info(f"Traffic sweep completed with {len(rows)} policies on {len(seeds)} seeds")
    return rows


def per_product_report(
    checkpoint_dir: str,
    env_config: dict,
    seeds: Sequence[int],
    products=None,
    fits=None
) -> tuple[list[dict], dict]:
    """
    Relative organic increment of every target product against manual bidding.

    Returns:
        Tuple of (rows, summary) with one row per target product

    Raises:
        EvaluationError: If the checkpoint cannot be loaded
    """
    env = build_env(env_config, fits, products)
    try:
        policy = load_policy(checkpoint_dir)
    except Exception as e:
        raise EvaluationError(f"Failed to load checkpoint {checkpoint_dir}: {e}")

    stats = rollout_increments(env, policy, seeds)
    rows = []
    for product_id, organic, baseline in zip(env.target_ids, stats.organic_policy, stats.organic_baseline):
        rows.append({
            'product': product_id,
            'organic_policy': float(organic),
            'organic_baseline': float(baseline),
            'relative_increment': float((organic - baseline) / max(baseline, 1.0)),
        })
    summary = {
        'products': len(rows),
        'above_0pct': sum(1 for r in rows if r['relative_increment'] > 0.0),
        'above_100pct': sum(1 for r in rows if r['relative_increment'] > 1.0),
    }
    return rows, summary
