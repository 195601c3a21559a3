from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.preprocessing import StandardScaler

VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension zero-mean/unit-variance transform with a variance floor."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64)
        variance = np.maximum(np.array(self.variance, dtype=np.float64), VARIANCE_FLOOR)
        mean.setflags(write=False)
        variance.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) / self.std

    def inverse_transform(self, matrix: np.ndarray) -> np.ndarray:
        return matrix * self.std + self.mean

    @classmethod
    def fit(cls, matrices: Iterable[np.ndarray]) -> "Standardizer":
        """
        Accumulate statistics over a stream of T x dim matrices.

        Args:
            matrices (Iterable[np.ndarray]): Per-utterance frame matrices

        Returns:
            Standardizer with population mean/variance over all frames
        """
        scaler = StandardScaler()
        seen = False
        for matrix in matrices:
            scaler.partial_fit(np.asarray(matrix, dtype=np.float64))
            seen = True
        if not seen:
            raise ValueError("cannot fit a standardizer on zero matrices")
        return cls(mean=scaler.mean_, variance=scaler.var_)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(mean=np.zeros(dim), variance=np.ones(dim))
