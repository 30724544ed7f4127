"""
Curves module for Leverage Bidder.
Traffic-win and exposure-effect functions of the recommendation feedback loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

logger = logging.getLogger(__name__)

Number = Union[float, np.ndarray]

# Any callable p -> z in [0, 1] can stand in for an exposure-effect curve
ExposureCurve = Callable[[Number], Number]


class CurveError(Exception):
    """Invalid curve parameters."""
    pass


def _as_result(value: np.ndarray, scalar: bool) -> Number:
    return float(value) if scalar else value


@dataclass(frozen=True)
class TrafficWinFn:
    """
    Organic impressions won at an average recommended score z.

    T(z) = saturation * (1 - exp(-steepness * (z - threshold))) for z > threshold, else 0.
    """
    threshold: float
    saturation: float
    steepness: float

    def __post_init__(self):
        if self.threshold < 0:
            raise CurveError(f"threshold must be nonnegative, got {self.threshold}")
        if self.saturation <= 0 or self.steepness <= 0:
            raise CurveError("saturation and steepness must be positive")

    def __call__(self, z: Number) -> Number:
        scalar = np.isscalar(z)
        z = np.asarray(z, dtype=np.float64)
        excess = np.maximum(z - self.threshold, 0.0)
        value = np.where(z > self.threshold, self.saturation * -np.expm1(-self.steepness * excess), 0.0)
        return _as_result(value, scalar)

    def to_dict(self) -> dict:
        return {'threshold': self.threshold, 'saturation': self.saturation, 'steepness': self.steepness}


@dataclass(frozen=True)
class ExposureEffectFn:
    """
    Next-window recommended score as a function of this window's impressions.

    U(p) = floor + (peak - floor) * ((p / E) * exp(1 - p / E)) ** decay, peaking at p = E.
    """
    peak_exposure: float
    peak_score: float
    floor_score: float = 0.0
    decay: float = 1.0

    def __post_init__(self):
        if self.peak_exposure <= 0:
            raise CurveError(f"peak_exposure must be positive, got {self.peak_exposure}")
        if not 0.0 < self.peak_score < 1.0:
            raise CurveError(f"peak_score must lie in (0, 1), got {self.peak_score}")
        if not 0.0 <= self.floor_score < self.peak_score:
            raise CurveError(
                f"floor_score must lie in [0, peak_score), got {self.floor_score}"
            )
        if self.decay <= 0:
            raise CurveError(f"decay must be positive, got {self.decay}")

    def __call__(self, p: Number) -> Number:
        scalar = np.isscalar(p)
        x = np.maximum(np.asarray(p, dtype=np.float64), 0.0) / self.peak_exposure
        shape = (x * np.exp(1.0 - x)) ** self.decay
        value = self.floor_score + (self.peak_score - self.floor_score) * shape
        return _as_result(value, scalar)

    def to_dict(self) -> dict:
        return {
            'peak_exposure': self.peak_exposure,
            'peak_score': self.peak_score,
            'floor_score': self.floor_score,
            'decay': self.decay,
        }


@dataclass(frozen=True)
class ShiftedExposureFn:
    """
    Exposure effect of an advertised product.

    p -> clamp(U(p + lam * business_pv) + mu * quality * [business_pv > 0], 0, 1)
    """
    base: ExposureCurve
    business_pv: float
    quality: float
    leverage_lambda: float = 1.0
    leverage_mu: float = 0.05

    def __call__(self, p: Number) -> Number:
        return exposure_shift(
            self.base, p, self.business_pv, self.quality, self.leverage_lambda, self.leverage_mu
        )


def exposure_shift(
    curve: ExposureCurve,
    organic_pv: Number,
    business_pv: float,
    quality: float,
    leverage_lambda: float,
    leverage_mu: float
) -> Number:
    """Evaluate an exposure curve under the advertising shift, clamped to [0, 1]."""
    scalar = np.isscalar(organic_pv)
    shifted = np.asarray(curve(np.asarray(organic_pv, dtype=np.float64) + leverage_lambda * business_pv))
    if business_pv > 0:
        shifted = shifted + leverage_mu * quality
    return _as_result(np.clip(shifted, 0.0, 1.0), scalar)


def traffic_win_from_dict(data: dict) -> TrafficWinFn:
    try:
        return TrafficWinFn(float(data['threshold']), float(data['saturation']), float(data['steepness']))
    except KeyError as e:
        raise CurveError(f"traffic_win: missing field {e}")


def exposure_effect_from_dict(data: dict) -> ExposureEffectFn:
    try:
        return ExposureEffectFn(
            float(data['peak_exposure']),
            float(data['peak_score']),
            float(data.get('floor_score', 0.0)),
            float(data.get('decay', 1.0)),
        )
    except KeyError as e:
        raise CurveError(f"exposure_effect: missing field {e}")
