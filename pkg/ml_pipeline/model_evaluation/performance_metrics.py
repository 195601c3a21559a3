from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from sklearn.metrics import mean_squared_error

from ..exceptions import DimensionMismatchError

MCD_CONSTANT = 10.0 / np.log(10.0)


class McdConfig(BaseModel):
    """
    Coefficients entering the mel-cepstral distortion.

    `dim_range` is a half-open [start, stop) index range; stop None means
    the last coefficient. The default excludes the 0th (energy) coefficient.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    dim_range: Tuple[int, Optional[int]] = (1, None)

    @model_validator(mode="after")
    def _non_empty(self) -> "McdConfig":
        start, stop = self.dim_range
        if start < 0 or (stop is not None and stop <= start):
            raise ValueError(f"dim_range {self.dim_range} is empty")
        return self

    @property
    def constant(self) -> float:
        return float(MCD_CONSTANT)

    def columns(self, mcc_dim: int) -> slice:
        start, stop = self.dim_range
        stop = mcc_dim if stop is None else min(stop, mcc_dim)
        if start >= stop:
            raise DimensionMismatchError(f"dim_range {self.dim_range} selects nothing of {mcc_dim} coefficients")
        return slice(start, stop)


def mcd_per_frame(converted: np.ndarray, reference: np.ndarray, cfg: Optional[McdConfig] = None) -> np.ndarray:
    """K * sqrt(2 * sum_d (converted_d - reference_d)^2) for every frame."""
    cfg = cfg or McdConfig()
    converted = np.asarray(converted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if converted.shape != reference.shape or converted.ndim != 2:
        raise DimensionMismatchError(f"MCD needs equal T x D inputs, got {converted.shape} and {reference.shape}")
    columns = cfg.columns(converted.shape[1])
    diff = converted[:, columns] - reference[:, columns]
    return cfg.constant * np.sqrt(2.0 * np.sum(diff * diff, axis=1))


def mcd(converted: np.ndarray, reference: np.ndarray, cfg: Optional[McdConfig] = None) -> float:
    """
    Mel-cepstral distortion in dB, averaged over frames.

    Args:
        converted (np.ndarray): T x D converted mel-cepstra (statics)
        reference (np.ndarray): T x D reference mel-cepstra
        cfg (McdConfig, optional): Coefficient range

    Returns:
        Mean MCD over frames

    Raises:
        DimensionMismatchError: If the shapes differ
    """
    return float(np.mean(mcd_per_frame(converted, reference, cfg)))


class PerformanceMetrics:
    """Frame-level error summaries used alongside MCD in evaluation tables."""

    @staticmethod
    def vuv_error_rate(vuv_true: np.ndarray, vuv_pred: np.ndarray) -> float:
        return float(np.mean((np.asarray(vuv_true) >= 0.5) != (np.asarray(vuv_pred) >= 0.5)))

    @staticmethod
    def f0_rmse(log_f0_true: np.ndarray, log_f0_pred: np.ndarray, voiced: np.ndarray) -> float:
        """RMSE of log-F0 over frames voiced in both sequences; nan if there are none."""
        voiced = np.asarray(voiced, dtype=bool)
        if not voiced.any():
            return float("nan")
        return float(np.sqrt(mean_squared_error(np.asarray(log_f0_true)[voiced], np.asarray(log_f0_pred)[voiced])))
