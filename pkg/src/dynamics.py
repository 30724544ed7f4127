"""
Dynamics module for Leverage Bidder.
Fixed points of the organic-traffic map, campaign trajectories and phenomenon buckets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from .curves import TrafficWinFn, ExposureCurve, ShiftedExposureFn
from .policies import AgentError, fixed_policy

logger = logging.getLogger(__name__)

SCAN_POINTS = 10_000
ROOT_TOLERANCE = 1e-10

BUCKETS = (
    ('<=-50%', -0.5),
    ('(-50%,-10%]', -0.1),
    ('(-10%,0%]', 0.0),
    ('(0%,10%]', 0.1),
    ('(10%,50%]', 0.5),
    ('>50%', np.inf),
)
COMPARISONS = ('wh_vs_be', 'af_vs_wh', 'af_vs_be')


class DynamicsError(Exception):
    """Dynamics analysis error."""
    pass


@dataclass
class FixedPoint:
    p: float
    stable: bool
    slope: float

    @property
    def stability(self) -> str:
        return 'stable' if self.stable else 'unstable'


@dataclass
class FixedPointReport:
    """Roots of T(U(p)) - p with the cold-start and stable points."""
    points: list[FixedPoint] = field(default_factory=list)
    cold_start_point: Optional[float] = None
    stable_point: Optional[float] = None

    def roots(self) -> list[float]:
        return [fp.p for fp in self.points]


def simulate_chain(T: TrafficWinFn, U: ExposureCurve, p0: float, steps: int) -> list[tuple[float, float]]:
    """
    Iterate the stable-condition chain z_t = U(p_{t-1}), p_t = T(z_t).

    Returns:
        List of (p_t, z_t) for t = 1..steps
    """
    if p0 < 0:
        raise DynamicsError(f"p0 must be nonnegative, got {p0}")
    if steps < 1:
        raise DynamicsError(f"steps must be at least 1, got {steps}")
    chain = []
    p = float(p0)
    for _ in range(steps):
        z = float(U(p))
        p = float(T(z))
        chain.append((p, z))
    return chain


def _composed(T: TrafficWinFn, U: ExposureCurve):
    return lambda p: float(T(float(U(max(p, 0.0)))))


def _slope(f, p: float) -> float:
    h = 1e-6 * max(1.0, abs(p))
    if p - h < 0:
        return (f(p + h) - f(p)) / h
    return (f(p + h) - f(p - h)) / (2.0 * h)


def fixed_points(T: TrafficWinFn, U: ExposureCurve, search_max: float) -> FixedPointReport:
    """
    Find every fixed point of p -> T(U(p)) on [0, search_max].

    Sign scan on a uniform grid, then bisection; stability from the slope of
    the map at the root (|slope| < 1 is stable).
    """
    if search_max <= 0:
        raise DynamicsError(f"search_max must be positive, got {search_max}")
    f = _composed(T, U)

    def g(p: float) -> float:
        return f(p) - p

    grid = np.linspace(0.0, search_max, SCAN_POINTS)
    values = np.array([g(p) for p in grid])
    roots: list[float] = []
    for i in range(len(grid)):
        if values[i] == 0.0:
            roots.append(float(grid[i]))
        elif i + 1 < len(grid) and values[i + 1] != 0.0 and np.sign(values[i]) != np.sign(values[i + 1]):
            roots.append(float(bisect(g, grid[i], grid[i + 1], xtol=ROOT_TOLERANCE * 1e-2)))

    report = FixedPointReport()
    for p in sorted(roots):
        if report.points and abs(p - report.points[-1].p) < 1e-8 * max(1.0, p):
            continue
        if abs(g(p)) >= 1e-9 * max(1.0, p):
            logger.warning(f"Discarding inexact fixed point {p}: residual {g(p)}")
            continue
        slope = _slope(f, p)
        report.points.append(FixedPoint(p=p, stable=abs(slope) < 1.0, slope=slope))

    interior = [fp for fp in report.points if fp.p > 0]
    unstable = [fp.p for fp in interior if not fp.stable]
    stable = [fp.p for fp in interior if fp.stable]
    report.cold_start_point = min(unstable) if unstable else None
    report.stable_point = max(stable) if stable else None
    return report


def shifted_exposure(
    U: ExposureCurve,
    business_pv: float,
    quality: float,
    leverage_lambda: float = 1.0,
    leverage_mu: float = 0.05
) -> ShiftedExposureFn:
    """Exposure curve of a product receiving business_pv advertising impressions per window."""
    if business_pv < 0:
        raise DynamicsError(f"business_pv must be nonnegative, got {business_pv}")
    return ShiftedExposureFn(U, business_pv, quality, leverage_lambda, leverage_mu)


def bucket_of(improvement: float) -> str:
    """Right-closed interval label of a relative improvement."""
    for label, upper in BUCKETS:
        if improvement <= upper:
            return label
    return BUCKETS[-1][0]


@dataclass
class PhenomenonCategory:
    improvements: dict[str, float]
    buckets: dict[str, str]


def classify_phenomenon(traj_be: Sequence[float], traj_wh: Sequence[float], traj_af: Sequence[float]) -> PhenomenonCategory:
    """
    Bucket the relative organic-traffic changes between the three stages.

    Raises:
        DynamicsError: If any stage is empty
    """
    if not len(traj_be) or not len(traj_wh) or not len(traj_af):
        raise DynamicsError("Every stage needs at least one observation")
    be, wh, af = (float(np.mean(traj)) for traj in (traj_be, traj_wh, traj_af))
    improvements = {
        'wh_vs_be': (wh - be) / max(be, 1.0),
        'af_vs_wh': (af - wh) / max(wh, 1.0),
        'af_vs_be': (af - be) / max(be, 1.0),
    }
    return PhenomenonCategory(
        improvements=improvements,
        buckets={name: bucket_of(value) for name, value in improvements.items()},
    )


@dataclass
class Campaign:
    before: list[float]
    during: list[float]
    after: list[float]


def simulate_campaign(
    T: TrafficWinFn,
    U: ExposureCurve,
    p0: float,
    before: int,
    during: int,
    after: int,
    business_pv: float,
    quality: float,
    leverage_lambda: float = 1.0,
    leverage_mu: float = 0.05
) -> Campaign:
    """Organic traffic before, during and after an advertising period."""
    shifted = shifted_exposure(U, business_pv, quality, leverage_lambda, leverage_mu)
    stages = []
    p = float(p0)
    for curve, steps in ((U, before), (shifted, during), (U, after)):
        traffic = []
        for _ in range(steps):
            p = float(T(float(curve(p))))
            traffic.append(p)
        stages.append(traffic)
    return Campaign(*stages)


def coefficient_of_variation(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean()) if values.size else 0.0
    if mean <= 0:
        return 0.0 if values.size and np.allclose(values, 0.0) else np.inf
    return float(values.std() / mean)


def phenomenon_table(campaigns: Sequence[Campaign], cv_threshold: float = 0.1) -> dict:
    """
    Count campaigns per comparison and bucket.

    Only stable products (before-stage coefficient of variation below the
    threshold) are counted; af_vs_be is restricted to campaigns whose
    after-stage mean dropped by more than 10% against the during stage.
    """
    counts = {name: {label: 0 for label, _ in BUCKETS} for name in COMPARISONS}
    stable = 0
    for campaign in campaigns:
        if coefficient_of_variation(campaign.before) >= cv_threshold:
            continue
        stable += 1
        category = classify_phenomenon(campaign.before, campaign.during, campaign.after)
        counts['wh_vs_be'][category.buckets['wh_vs_be']] += 1
        counts['af_vs_wh'][category.buckets['af_vs_wh']] += 1
        if category.improvements['af_vs_wh'] < -0.1:
            counts['af_vs_be'][category.buckets['af_vs_be']] += 1
    return {'stable_products': stable, 'total_products': len(campaigns), 'counts': counts}


def sample_curves(T: TrafficWinFn, U: ExposureCurve, p_max: float, n: int = 200) -> list[dict]:
    """(p, U(p), T(U(p))) rows on a uniform grid for plotting."""
    rows = []
    for p in np.linspace(0.0, p_max, n):
        z = float(U(float(p)))
        rows.append({'p': float(p), 'z': z, 'next_p': float(T(z))})
    return rows


def fixed_point_report_rows(product_id: int, report: FixedPointReport) -> list[dict]:
    return [
        {
            'product': product_id,
            'p': fp.p,
            'stability': fp.stability,
            'slope': fp.slope,
            'cold_start': fp.p == report.cold_start_point,
            'stable_point': fp.p == report.stable_point,
        }
        for fp in report.points
    ]


@dataclass
class SweepRow:
    policy: str
    ratio: Optional[float]
    business_increment: float
    organic_increment: float
    business_increment_std: float = 0.0
    organic_increment_std: float = 0.0


def bid_ratio_sweep(
    env_config: dict,
    ratios: Sequence[float],
    seeds: Sequence[int],
    products=None,
    fits=None
) -> list[SweepRow]:
    """
    Constant-ratio policies against the paired manual baseline.

    With exposure fits the sweep runs on the replay environment.

    Raises:
        DynamicsError: If a ratio lies outside [-range, range]
    """
    from .evaluation import rollout_increments
    from .exposure_fit import build_env

    env = build_env(env_config, fits, products)
    rows = []
    for ratio in ratios:
        try:
            policy = fixed_policy(float(ratio), env.range)
        except AgentError as e:
            raise DynamicsError(str(e))
        stats = rollout_increments(env, policy, seeds)
        rows.append(SweepRow(
            policy=f"fixed({float(ratio):g})",
            ratio=float(ratio),
            business_increment=stats.business_increment,
            organic_increment=stats.organic_increment,
            business_increment_std=stats.business_increment_std,
            organic_increment_std=stats.organic_increment_std,
        ))
    return rows
