"""
Delta features and maximum-likelihood parameter generation (MLPG).

Windows (edge replication at both ends):
    static  w0 = [1]
    delta   w1 = [-0.5, 0, 0.5]
    delta2  w2 = [1, -2, 1]

apply_deltas and mlpg share the same window matrices, so generating from the
deltas of a trajectory with a dominant static precision returns the
trajectory.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

from ..exceptions import DimensionMismatchError
from ..preprocessing.feature_scaling import VARIANCE_FLOOR

BANDWIDTH = 2


@lru_cache(maxsize=64)
def delta_window_matrices(num_frames: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    Build the T x T delta and delta-delta operators with edge replication.

    Args:
        num_frames (int): Sequence length T >= 1

    Returns:
        Tuple of (delta, delta_delta) sparse matrices
    """
    t = np.arange(num_frames)
    prev = np.maximum(t - 1, 0)
    nxt = np.minimum(t + 1, num_frames - 1)

    # duplicate coordinates (at the edges) are summed on conversion
    delta = sp.coo_matrix(
        (np.concatenate([np.full(num_frames, -0.5), np.full(num_frames, 0.5)]),
         (np.concatenate([t, t]), np.concatenate([prev, nxt]))),
        shape=(num_frames, num_frames),
    ).tocsr()
    delta_delta = sp.coo_matrix(
        (np.concatenate([np.ones(num_frames), np.full(num_frames, -2.0), np.ones(num_frames)]),
         (np.concatenate([t, t, t]), np.concatenate([prev, t, nxt]))),
        shape=(num_frames, num_frames),
    ).tocsr()
    return delta, delta_delta


def apply_deltas(statics: np.ndarray) -> np.ndarray:
    """
    Stack statics with their delta and delta-delta channels.

    Args:
        statics (np.ndarray): T x D static trajectory

    Returns:
        T x 3D matrix [static | delta | delta-delta]
    """
    statics = np.asarray(statics, dtype=np.float64)
    if statics.ndim == 1:
        statics = statics[:, np.newaxis]
    if statics.shape[0] < 1:
        raise DimensionMismatchError("apply_deltas needs at least one frame")
    delta, delta_delta = delta_window_matrices(statics.shape[0])
    return np.hstack([statics, delta @ statics, delta_delta @ statics])


@dataclass(frozen=True)
class GlobalVariances:
    """Per-dimension variances of the static, delta and delta-delta channels."""

    static: np.ndarray
    delta: np.ndarray
    delta_delta: np.ndarray

    def __post_init__(self) -> None:
        for name in ("static", "delta", "delta_delta"):
            values = np.maximum(np.array(getattr(self, name), dtype=np.float64), VARIANCE_FLOOR)
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        if not (self.static.shape == self.delta.shape == self.delta_delta.shape):
            raise DimensionMismatchError("variance channels must share one dimension")

    @property
    def dim(self) -> int:
        return int(self.static.shape[0])

    @classmethod
    def from_stacked(cls, stacked: np.ndarray) -> "GlobalVariances":
        """Split a 3D variance vector laid out as [static | delta | delta-delta]."""
        stacked = np.ravel(stacked)
        if stacked.shape[0] % 3 != 0:
            raise DimensionMismatchError(f"stacked variance length {stacked.shape[0]} not divisible by 3")
        static, delta, delta_delta = np.split(stacked, 3)
        return cls(static=static, delta=delta, delta_delta=delta_delta)


@lru_cache(maxsize=64)
def _operator_bands(num_frames: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    delta, delta_delta = delta_window_matrices(num_frames)
    identity = sp.identity(num_frames, format="csr")
    return (
        _upper_bands(identity, num_frames),
        _upper_bands((delta.T @ delta).tocsr(), num_frames),
        _upper_bands((delta_delta.T @ delta_delta).tocsr(), num_frames),
    )


def _upper_bands(matrix: sp.spmatrix, num_frames: int) -> np.ndarray:
    # LAPACK upper banded storage: bands[u + i - j, j] = a[i, j]
    bands = np.zeros((BANDWIDTH + 1, num_frames))
    for offset in range(BANDWIDTH + 1):
        if offset < num_frames:
            bands[BANDWIDTH - offset, offset:] = matrix.diagonal(offset)
    return bands


def mlpg(means: np.ndarray, variances: GlobalVariances) -> np.ndarray:
    """
    Generate the maximum-likelihood static trajectory.

    Solves (W' S^-1 W) c = W' S^-1 mu for every dimension with a banded
    Cholesky factorization.

    Args:
        means (np.ndarray): T x 3D stacked means [static | delta | delta-delta]
        variances (GlobalVariances): Diagonal covariance per channel and dimension

    Returns:
        T x D static trajectory
    """
    means = np.asarray(means, dtype=np.float64)
    num_frames, width = means.shape
    dim = variances.dim
    if width != 3 * dim:
        raise DimensionMismatchError(f"means have width {width}, variances describe {dim} dims")
    if num_frames < 1:
        raise DimensionMismatchError("mlpg needs at least one frame")

    p_static = 1.0 / variances.static
    p_delta = 1.0 / variances.delta
    p_delta_delta = 1.0 / variances.delta_delta
    assert np.all(p_static > 0), "static precision must be positive"

    delta, delta_delta = delta_window_matrices(num_frames)
    mu_static, mu_delta, mu_delta_delta = np.split(means, 3, axis=1)
    rhs = (
        mu_static * p_static
        + (delta.T @ mu_delta) * p_delta
        + (delta_delta.T @ mu_delta_delta) * p_delta_delta
    )

    band_static, band_delta, band_delta_delta = _operator_bands(num_frames)
    statics = np.empty((num_frames, dim))
    for d in range(dim):
        bands = (
            p_static[d] * band_static
            + p_delta[d] * band_delta
            + p_delta_delta[d] * band_delta_delta
        )
        factor = cholesky_banded(bands, lower=False)
        statics[:, d] = cho_solve_banded((factor, False), rhs[:, d])
    return statics


def cepstral_postfilter(mcc: np.ndarray, beta: float = 1.4) -> np.ndarray:
    """
    Emphasize the cepstrum by scaling coefficients with index >= 2.

    Args:
        mcc (np.ndarray): T x D static mel-cepstra
        beta (float): Scale factor, >= 1

    Returns:
        Post-filtered T x D mel-cepstra
    """
    if beta < 1.0:
        raise ValueError(f"postfilter beta must be >= 1, got {beta}")
    filtered = np.array(mcc, dtype=np.float64, copy=True)
    filtered[:, 2:] *= beta
    return filtered
