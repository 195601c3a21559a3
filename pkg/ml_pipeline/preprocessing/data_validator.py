from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
import structlog

from ..exceptions import FeatureFormatError
from ..feature_store.feature_definitions import FeatureKind, Posteriorgram, UtteranceRecord
from ..feature_store.feature_io import read_feature_file, read_posteriorgram
from ..feature_store.manifest import CorpusManifest


@dataclass(frozen=True)
class Violation:
    """One broken posteriorgram invariant."""

    frame: int
    block: int
    observed: float
    expected: float
    reason: str

    def __str__(self) -> str:
        return (
            f"frame {self.frame} block {self.block}: {self.reason} "
            f"(observed {self.observed:.9g}, expected {self.expected:.9g})"
        )


def validate_posteriorgram(ppg: Posteriorgram, tol: float = 1e-6) -> List[Violation]:
    """
    Check the range and row-sum invariants of a posteriorgram.

    Every entry must lie in [0, 1]; every normalized block of every row must
    sum to 1 within `tol`.

    Args:
        ppg (Posteriorgram): Posteriorgram to check
        tol (float): Allowed absolute deviation of a block sum from 1

    Returns:
        List of violations, empty iff all invariants hold
    """
    violations: List[Violation] = []
    frames = ppg.frames

    below = frames < -tol
    above = frames > 1.0 + tol
    for t in np.flatnonzero(np.any(below | above, axis=1)):
        row = frames[t]
        worst = float(row.min()) if row.min() < -tol else float(row.max())
        violations.append(Violation(int(t), -1, worst, 0.0 if worst < 0 else 1.0, "entry out of [0, 1]"))

    start = 0
    for block, width in enumerate(ppg.block_dims):
        sums = frames[:, start:start + width].sum(axis=1)
        for t in np.flatnonzero(np.abs(sums - 1.0) > tol):
            violations.append(Violation(int(t), block, float(sums[t]), 1.0, "row sum"))
        start += width

    return sorted(violations, key=lambda v: (v.frame, v.block))


class DataValidator:
    """Corpus-level integrity checks over a manifest."""

    def __init__(self, dim_a: int, tol: float = 1e-6, logger: Optional[structlog.BoundLogger] = None):
        """
        Args:
            dim_a (int): Language-A class count, used to split stacked PPGs
            tol (float): Row-sum tolerance for posteriorgram checks
            logger: Optional logger, defaults to one bound to the class name
        """
        self.dim_a = dim_a
        self.tol = tol
        self.logger = logger or structlog.get_logger(self.__class__.__name__)

    def validate_record(self, manifest: CorpusManifest, record: UtteranceRecord) -> List[str]:
        """
        Check that a record's files exist, parse and agree on the frame count.

        Returns:
            List of human-readable problems, empty when the record is sound
        """
        problems: List[str] = []
        paths = {"acoustic_path": record.acoustic_path}
        if record.ppg_path:
            paths["ppg_path"] = record.ppg_path
        if record.latent_path:
            paths["latent_path"] = record.latent_path

        for field_name, relative in paths.items():
            path = manifest.resolve(relative)
            if not path.exists():
                problems.append(f"{field_name} {path} does not exist")
                continue
            try:
                kind_code, matrix = read_feature_file(path)
            except FeatureFormatError as e:
                problems.append(f"{field_name}: {e}")
                continue
            if matrix.shape[0] != record.num_frames:
                problems.append(
                    f"{field_name} has {matrix.shape[0]} frames, manifest says {record.num_frames}"
                )
            if field_name == "acoustic_path" and kind_code != FeatureKind.ACOUSTIC:
                problems.append(f"acoustic_path has kind_code {kind_code}")
        return problems

    def validate_corpus(self, manifest: CorpusManifest) -> pd.DataFrame:
        """
        Run record and posteriorgram checks over every utterance.

        Returns:
            DataFrame with one row per problem (utterance_id, problem); empty
            when the corpus is sound
        """
        rows = []
        for record in manifest:
            for problem in self.validate_record(manifest, record):
                rows.append({"utterance_id": record.utterance_id, "problem": problem})
            if record.ppg_path and manifest.resolve(record.ppg_path).exists():
                ppg = read_posteriorgram(manifest.resolve(record.ppg_path), self.dim_a)
                # binary32 storage rounds each entry by up to 6e-8 relative
                for violation in validate_posteriorgram(ppg, self.tol):
                    rows.append({"utterance_id": record.utterance_id, "problem": str(violation)})

        report = pd.DataFrame(rows, columns=["utterance_id", "problem"])
        if report.empty:
            self.logger.info("corpus_valid", utterances=len(manifest))
        else:
            self.logger.warning(
                "corpus_invalid",
                utterances=len(manifest),
                problems=len(report),
                first=report.iloc[0]["problem"],
            )
        return report
