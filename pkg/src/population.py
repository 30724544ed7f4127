"""
Population module for Leverage Bidder.
Builds target and competitor products from configuration or a seeded generator.
"""

from __future__ import annotations

import logging

import numpy as np

from .curves import (
    CurveError, TrafficWinFn, ExposureEffectFn,
    traffic_win_from_dict, exposure_effect_from_dict,
)
from .market import MarketError, Product

logger = logging.getLogger(__name__)

ARCHETYPES = ('stable', 'cold_start', 'saturating', 'low_quality', 'negative')

# Target i gets ARCHETYPE_CYCLE[i % len(ARCHETYPE_CYCLE)]
ARCHETYPE_CYCLE = ('stable', 'cold_start', 'saturating', 'stable', 'cold_start', 'negative', 'low_quality', 'stable')

TRAFFIC_THRESHOLD = 0.3
TRAFFIC_STEEPNESS = 4.0
STRONG_COMPETITORS = 3
TARGET_ECPM = (0.035, 0.055)
STRONG_ECPM = (0.06, 0.09)
WEAK_ECPM = (0.005, 0.03)


def stable_traffic(T: TrafficWinFn, U: ExposureEffectFn, iterations: int = 200) -> float:
    """Organic traffic reached by iterating T(U(p)) from saturation."""
    p = T.saturation
    for _ in range(iterations):
        p = float(T(float(U(p))))
    return p


def _target(product_id: int, archetype: str, rng: np.random.Generator) -> Product:
    saturation = float(rng.uniform(800.0, 1200.0))
    T = TrafficWinFn(TRAFFIC_THRESHOLD, saturation, TRAFFIC_STEEPNESS)
    quality = 1.0
    initial = None

    if archetype == 'stable':
        # Peak far above own organic traffic: any business traffic lifts the score
        U = ExposureEffectFn(2.0 * saturation, 0.9, 0.1)
    elif archetype == 'cold_start':
        U = ExposureEffectFn(2.0 * saturation, 0.9, 0.0)
        initial = 0.2
    elif archetype == 'saturating':
        U = ExposureEffectFn(0.7 * saturation, 0.9, 0.1)
        quality = 0.2
    elif archetype == 'low_quality':
        U = ExposureEffectFn(1.2 * saturation, 0.25, 0.05)
        quality = 2.0
        initial = 0.05
    elif archetype == 'negative':
        U = ExposureEffectFn(1.3 * saturation, 0.9, 0.1)
        quality = -3.0
    else:
        raise MarketError(f"Unknown archetype: {archetype}")

    if initial is None:
        initial = float(U(stable_traffic(T, U)))

    pctr = float(rng.uniform(0.03, 0.06))
    ecpm = float(rng.uniform(*TARGET_ECPM))
    return Product(
        id=product_id,
        apctr_ad=pctr,
        apcvr_ad=float(rng.uniform(0.01, 0.05)),
        bid=ecpm / pctr,
        ppb=float(np.exp(rng.uniform(np.log(20.0), np.log(200.0)))),
        traffic_win=T,
        exposure_effect=U,
        target=True,
        initial_score=initial,
        business_quality=quality,
    )


def _competitor(product_id: int, strong: bool, rng: np.random.Generator) -> Product:
    pctr = float(rng.uniform(0.02, 0.08))
    ecpm = float(rng.uniform(*STRONG_ECPM) if strong else rng.uniform(*WEAK_ECPM))
    return Product(
        id=product_id,
        apctr_ad=pctr,
        apcvr_ad=float(rng.uniform(0.01, 0.05)),
        bid=ecpm / pctr,
        ppb=float(np.exp(rng.uniform(np.log(20.0), np.log(200.0)))),
        target=False,
    )


def generate_population(n_targets: int, n_competitors: int, seed: int = 0) -> list[Product]:
    """
    Generate a seeded product population.

    Targets follow ARCHETYPE_CYCLE, weighted toward products whose organic
    traffic depends on business traffic. The first STRONG_COMPETITORS
    competitors outbid every target at manual bids and lose to most targets
    at the maximum ratio; the remaining competitors bid below every target.

    Args:
        n_targets: Number of target products (ids 0..n_targets-1)
        n_competitors: Number of competitor products
        seed: Population seed

    Returns:
        List of products, targets first
    """
    if n_targets < 0 or n_competitors < 0:
        raise MarketError("Population sizes must be nonnegative")
    rng = np.random.default_rng(seed)
    products = [_target(i, ARCHETYPE_CYCLE[i % len(ARCHETYPE_CYCLE)], rng) for i in range(n_targets)]
    products.extend(
        _competitor(n_targets + j, j < STRONG_COMPETITORS, rng) for j in range(n_competitors)
    )
    logger.debug(f"Generated population of {n_targets} targets and {n_competitors} competitors (seed {seed})")
    return products


def products_from_config(entries: list[dict]) -> list[Product]:
    """
    Build products from explicit configuration entries.

    Raises:
        MarketError: If an entry is invalid
    """
    products = []
    for entry in entries:
        try:
            target = bool(entry.get('target', True))
            products.append(Product(
                id=int(entry['id']),
                apctr_ad=float(entry['apctr_ad']),
                apcvr_ad=float(entry['apcvr_ad']),
                bid=float(entry['bid']),
                ppb=float(entry['ppb']),
                traffic_win=traffic_win_from_dict(entry['traffic_win']) if target else None,
                exposure_effect=exposure_effect_from_dict(entry['exposure_effect']) if target else None,
                target=target,
                initial_score=float(entry.get('initial_score', 0.5)),
                business_quality=float(entry.get('business_quality', 1.0)),
            ))
        except KeyError as e:
            raise MarketError(f"Product entry missing field {e}")
        except CurveError as e:
            raise MarketError(f"Product {entry.get('id')}: {e}")
    return products


def build_products(settings: dict) -> list[Product]:
    """Products of an environment section: explicit list or generated population."""
    if settings.get('products'):
        return products_from_config(settings['products'])
    return generate_population(
        int(settings.get('n_targets', 8)),
        int(settings.get('n_competitors', 24)),
        int(settings.get('population_seed', 0)),
    )
