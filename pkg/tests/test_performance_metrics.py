import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from pydantic import ValidationError

from ml_pipeline.exceptions import DimensionMismatchError
from ml_pipeline.model_evaluation.performance_metrics import (
    MCD_CONSTANT,
    McdConfig,
    PerformanceMetrics,
    mcd,
    mcd_per_frame,
)

frames = arrays(np.float64, (6, 5), elements=st.floats(-10, 10, allow_nan=False))


class TestMcd:
    def test_identical_sequences(self, rng):
        mcc = rng.standard_normal((8, 5))
        assert mcd(mcc, mcc) == 0.0

    def test_unit_error_in_one_coefficient(self):
        reference = np.zeros((1, 4))
        converted = reference.copy()
        converted[0, 2] = 1.0
        assert mcd(converted, reference) == pytest.approx(6.1415, abs=1e-3)
        assert mcd(converted, reference) == pytest.approx(MCD_CONSTANT * np.sqrt(2.0))

    def test_energy_coefficient_excluded_by_default(self):
        converted = np.zeros((3, 4))
        converted[:, 0] = 5.0
        assert mcd(converted, np.zeros((3, 4))) == 0.0
        assert mcd(converted, np.zeros((3, 4)), McdConfig(dim_range=(0, None))) > 0.0

    def test_dim_range_stop(self):
        converted = np.zeros((1, 4))
        converted[0, 3] = 1.0
        assert mcd(converted, np.zeros((1, 4)), McdConfig(dim_range=(1, 3))) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(frames, frames)
    def test_symmetric(self, a, b):
        np.testing.assert_allclose(mcd_per_frame(a, b), mcd_per_frame(b, a))

    @settings(max_examples=30, deadline=None)
    @given(frames, frames)
    def test_doubling_the_error_doubles_the_distortion(self, a, b):
        doubled = b + 2.0 * (a - b)
        np.testing.assert_allclose(mcd_per_frame(doubled, b), 2.0 * mcd_per_frame(a, b), rtol=1e-9, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mcd(np.zeros((3, 4)), np.zeros((4, 4)))

    def test_empty_range_rejected(self):
        with pytest.raises(ValidationError):
            McdConfig(dim_range=(3, 2))

    def test_range_beyond_dimensions(self):
        with pytest.raises(DimensionMismatchError):
            mcd(np.zeros((1, 4)), np.zeros((1, 4)), McdConfig(dim_range=(5, None)))


class TestPerformanceMetrics:
    def test_vuv_error_rate(self):
        assert PerformanceMetrics.vuv_error_rate([1, 0, 1, 0], [1, 1, 0.2, 0]) == 0.5

    def test_f0_rmse(self):
        voiced = np.array([True, False, True])
        assert PerformanceMetrics.f0_rmse([5.0, 0.0, 5.0], [5.3, 9.0, 4.7], voiced) == pytest.approx(0.3)
        assert np.isnan(PerformanceMetrics.f0_rmse([1.0], [2.0], [False]))
