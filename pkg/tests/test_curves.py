"""
Tests for curves module.
"""

import numpy as np
import pytest

from src.curves import (
    CurveError,
    ExposureEffectFn,
    ShiftedExposureFn,
    TrafficWinFn,
    exposure_effect_from_dict,
    exposure_shift,
    traffic_win_from_dict,
)


class TestTrafficWinFn:
    """Tests for the traffic-win curve."""

    def test_zero_below_threshold(self):
        """Test that scores at or below threshold win nothing."""
        T = TrafficWinFn(0.3, 1000.0, 4.0)
        assert T(0.0) == 0.0
        assert T(0.3) == 0.0

    def test_closed_form(self):
        """Test a value against the closed form."""
        T = TrafficWinFn(0.3, 1000.0, 4.0)
        assert T(0.5) == pytest.approx(1000.0 * (1.0 - np.exp(-0.8)))

    def test_monotone_and_bounded(self):
        """Test monotonicity and saturation on a grid."""
        T = TrafficWinFn(0.3, 1000.0, 4.0)
        values = T(np.linspace(0.0, 1.0, 101))
        assert isinstance(values, np.ndarray)
        assert np.all(np.diff(values) >= 0)
        assert values.max() < 1000.0

    def test_invalid_parameters(self):
        """Test that nonpositive saturation is rejected."""
        with pytest.raises(CurveError):
            TrafficWinFn(0.3, 0.0, 4.0)


class TestExposureEffectFn:
    """Tests for the exposure-effect curve."""

    def test_peak_and_floor(self):
        """Test the floor at zero exposure and the peak at E."""
        U = ExposureEffectFn(1200.0, 0.9, 0.1)
        assert U(0.0) == pytest.approx(0.1)
        assert U(1200.0) == pytest.approx(0.9)

    def test_unimodal(self):
        """Test that the curve rises before E and falls after."""
        U = ExposureEffectFn(1200.0, 0.9, 0.1)
        rising = U(np.linspace(0.0, 1200.0, 50))
        falling = U(np.linspace(1200.0, 6000.0, 50))
        assert np.all(np.diff(rising) > 0)
        assert np.all(np.diff(falling) < 0)

    def test_negative_exposure_clamped(self):
        """Test that negative exposure evaluates like zero."""
        U = ExposureEffectFn(1200.0, 0.9, 0.1)
        assert U(-50.0) == U(0.0)

    def test_invalid_peak_score(self):
        """Test that peak scores outside (0, 1) are rejected."""
        with pytest.raises(CurveError) as exc_info:
            ExposureEffectFn(1200.0, 1.2, 0.1)
        assert 'peak_score' in str(exc_info.value)

    def test_floor_above_peak(self):
        """Test that a floor above the peak is rejected."""
        with pytest.raises(CurveError):
            ExposureEffectFn(1200.0, 0.3, 0.5)


class TestExposureShift:
    """Tests for the advertising shift."""

    def test_shift_moves_curve(self):
        """Test that business impressions shift the argument and add the quality term."""
        U = ExposureEffectFn(1200.0, 0.9, 0.1)
        value = exposure_shift(U, 300.0, 200.0, 1.0, 1.0, 0.05)
        assert value == pytest.approx(U(500.0) + 0.05)

    def test_no_quality_term_without_business(self):
        """Test that the quality term needs business impressions."""
        U = ExposureEffectFn(1200.0, 0.9, 0.1)
        assert exposure_shift(U, 300.0, 0.0, 5.0, 1.0, 0.05) == pytest.approx(U(300.0))

    def test_clamped_to_unit_interval(self):
        """Test that large quality terms are clamped."""
        U = ExposureEffectFn(1200.0, 0.9, 0.1)
        assert exposure_shift(U, 1200.0, 10.0, 10.0, 1.0, 0.05) == 1.0
        assert exposure_shift(U, 0.0, 10.0, -10.0, 1.0, 0.05) == 0.0

    def test_shifted_function_object(self):
        """Test that ShiftedExposureFn evaluates exposure_shift."""
        U = ExposureEffectFn(1200.0, 0.25, 0.05)
        shifted = ShiftedExposureFn(U, 1200.0, 2.0)
        assert shifted(0.0) == pytest.approx(0.35)


class TestFromDict:
    """Tests for curve construction from configuration."""

    def test_round_trip(self):
        """Test that to_dict output rebuilds an equal curve."""
        T = TrafficWinFn(0.3, 900.0, 4.0)
        U = ExposureEffectFn(1100.0, 0.9, 0.1, 2.0)
        assert traffic_win_from_dict(T.to_dict()) == T
        assert exposure_effect_from_dict(U.to_dict()) == U

    def test_optional_fields(self):
        """Test that floor and decay default."""
        U = exposure_effect_from_dict({'peak_exposure': 1000, 'peak_score': 0.8})
        assert U.floor_score == 0.0
        assert U.decay == 1.0

    def test_missing_field(self):
        """Test that a missing field raises CurveError."""
        with pytest.raises(CurveError) as exc_info:
            traffic_win_from_dict({'threshold': 0.3})
        assert 'missing field' in str(exc_info.value)
