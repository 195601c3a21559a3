from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class F0Stats:
    """Log-F0 statistics over voiced frames."""

    mean_log_f0: float
    std_log_f0: float
    frames_counted: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "std_log_f0", max(float(self.std_log_f0), STD_FLOOR))

    @classmethod
    def from_frames(cls, log_f0: np.ndarray, vuv: np.ndarray) -> "F0Stats":
        """
        Args:
            log_f0 (np.ndarray): Per-frame log-F0
            vuv (np.ndarray): Per-frame voicing flag; frames with vuv >= 0.5 count

        Returns:
            F0Stats over the voiced frames (population std)
        """
        voiced = np.asarray(log_f0, dtype=np.float64)[np.asarray(vuv) >= 0.5]
        return cls.from_voiced(voiced)

    @classmethod
    def from_voiced(cls, voiced_log_f0: Sequence[float]) -> "F0Stats":
        values = np.asarray(voiced_log_f0, dtype=np.float64)
        if values.size == 0:
            raise ValueError("F0 statistics need at least one voiced frame")
        return cls(
            mean_log_f0=float(values.mean()),
            std_log_f0=float(values.std()),
            frames_counted=int(values.size),
        )

    def to_dict(self) -> Dict[str, float]:
        return {
            "mean_log_f0": self.mean_log_f0,
            "std_log_f0": self.std_log_f0,
            "frames_counted": self.frames_counted,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "F0Stats":
        return cls(
            mean_log_f0=float(data["mean_log_f0"]),
            std_log_f0=float(data["std_log_f0"]),
            frames_counted=int(data["frames_counted"]),
        )


def convert_f0(log_f0: np.ndarray, vuv: np.ndarray, src: F0Stats, tgt: F0Stats) -> np.ndarray:
    """
    Global linear transformation of log-F0.

    y = (x - src.mean) * tgt.std / src.std + tgt.mean on voiced frames;
    unvoiced frames pass through unchanged.

    Args:
        log_f0 (np.ndarray): Source log-F0 per frame
        vuv (np.ndarray): Source voicing flags
        src (F0Stats): Source statistics
        tgt (F0Stats): Target statistics

    Returns:
        Converted log-F0 per frame
    """
    log_f0 = np.asarray(log_f0, dtype=np.float64)
    voiced = np.asarray(vuv) >= 0.5
    converted = log_f0.copy()
    scale = tgt.std_log_f0 / src.std_log_f0
    converted[voiced] = (log_f0[voiced] - src.mean_log_f0) * scale + tgt.mean_log_f0
    return converted
