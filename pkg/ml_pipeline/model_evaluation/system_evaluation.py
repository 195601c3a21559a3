"""
Cross-lingual evaluation of one trained system on the parallel test split.

A direction A->B converts every language-A test utterance of language-A
content to every language-B speaker, and scores it against that speaker's
own rendering of the same content.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import structlog

from ..exceptions import MissingReferenceError, RegimeMismatchError, UsageError
from ..feature_store.feature_definitions import AcousticSequence, LanguageId, PosteriorgramKind, UtteranceRecord
from ..feature_store.feature_io import read_acoustic, read_feature_file
from ..feature_store.manifest import CorpusManifest
from ..model_deployment.voice_converter import ConversionJob, GenerationSettings, VoiceConverter
from .performance_metrics import McdConfig, PerformanceMetrics, mcd

logger = structlog.get_logger(__name__)

CONVERTED_DIR = "converted"
TABLE_COLUMNS = [
    "direction",
    "source",
    "source_speaker",
    "target_speaker",
    "content_id",
    "gender_pair",
    "frames",
    "mcd",
    "source_mcd",
    "vuv_error",
    "f0_rmse",
]


@dataclass(frozen=True)
class Direction:
    source: LanguageId
    target: LanguageId

    @classmethod
    def parse(cls, text: str) -> "Direction":
        """Accepts 'A->B', 'A2B' or 'AB'."""
        cleaned = text.replace("->", "").replace("2", "").strip().upper()
        valid = {language.value for language in LanguageId}
        if len(cleaned) != 2 or cleaned[0] == cleaned[1] or not set(cleaned) <= valid:
            raise UsageError(f"direction must name two different languages, got {text!r}")
        return cls(LanguageId(cleaned[0]), LanguageId(cleaned[1]))

    @property
    def label(self) -> str:
        return f"{self.source.value}->{self.target.value}"

    @property
    def slug(self) -> str:
        return f"{self.source.value}2{self.target.value}"


@dataclass(frozen=True)
class EvaluationPair:
    source: UtteranceRecord
    reference: UtteranceRecord

    @property
    def job(self) -> ConversionJob:
        return ConversionJob(self.source.utterance_id, self.reference.speaker_id)

    @property
    def gender_pair(self) -> str:
        return "intra" if self.source.gender == self.reference.gender else "inter"


@dataclass
class SystemEvaluation:
    direction: Direction
    mean_mcd: float
    table: pd.DataFrame


def plan_pairs(test_manifest: CorpusManifest, direction: Direction) -> List[EvaluationPair]:
    """
    Pair every source-language utterance of source-language content with
    every target-language speaker's rendering of the same content.

    Raises:
        MissingReferenceError: If a target speaker lacks a rendering of a content
    """
    references: Dict[Tuple[str, str], UtteranceRecord] = {
        (r.speaker_id, r.content_id): r for r in test_manifest if r.content_id
    }
    targets = test_manifest.speakers(direction.target)
    sources = [
        r for r in test_manifest
        if r.language is direction.source and r.content_language is direction.source
    ]
    if not sources or not targets:
        raise MissingReferenceError(f"test manifest has no parallel content for {direction.label}")

    pairs: List[EvaluationPair] = []
    for source in sources:
        for target in targets:
            reference = references.get((target, source.content_id))
            if reference is None:
                raise MissingReferenceError(f"no rendering of {source.content_id} by target speaker {target}")
            pairs.append(EvaluationPair(source, reference))
    return pairs


def manifest_regime(manifest: CorpusManifest) -> PosteriorgramKind:
    """Posteriorgram regime of a regime manifest, read from its first PPG file."""
    for record in manifest:
        if record.ppg_path:
            kind_code, _ = read_feature_file(manifest.resolve(record.ppg_path))
            return PosteriorgramKind.from_feature_kind(kind_code)
    raise RegimeMismatchError("manifest has no posteriorgram paths; extract a regime first")


def score_pair(
    pair: EvaluationPair,
    converted: AcousticSequence,
    source: AcousticSequence,
    reference: AcousticSequence,
    direction: Direction,
    cfg: Optional[McdConfig] = None,
) -> Dict[str, Any]:
    """
    One table row: MCD of the conversion and of the unconverted source
    against the reference, plus V/UV error and log-F0 RMSE over frames
    voiced in both the conversion and the reference.
    """
    return {
        "direction": direction.label,
        "source": pair.source.utterance_id,
        "source_speaker": pair.source.speaker_id,
        "target_speaker": pair.reference.speaker_id,
        "content_id": pair.source.content_id,
        "gender_pair": pair.gender_pair,
        "frames": reference.num_frames,
        "mcd": mcd(converted.mcc_static, reference.mcc_static, cfg),
        "source_mcd": mcd(source.mcc_static, reference.mcc_static, cfg),
        "vuv_error": PerformanceMetrics.vuv_error_rate(reference.vuv, converted.vuv),
        "f0_rmse": PerformanceMetrics.f0_rmse(reference.log_f0, converted.log_f0, reference.voiced & converted.voiced),
    }


def score_persisted(
    test_manifest: CorpusManifest,
    direction: Direction,
    converted_dir: Path,
    cfg: Optional[McdConfig] = None,
) -> pd.DataFrame:
    """Rebuild the per-utterance table from converted files on disk."""
    rows = []
    for pair in plan_pairs(test_manifest, direction):
        converted = read_acoustic(Path(converted_dir) / pair.job.output_name)
        source = read_acoustic(test_manifest.resolve(pair.source.acoustic_path))
        reference = read_acoustic(test_manifest.resolve(pair.reference.acoustic_path))
        rows.append(score_pair(pair, converted, source, reference, direction, cfg))
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def evaluate_system(
    model: Any,
    test_manifest: CorpusManifest,
    direction: Direction,
    out_dir: Path,
    settings: Optional[GenerationSettings] = None,
    cfg: Optional[McdConfig] = None,
    n_jobs: int = 1,
) -> SystemEvaluation:
    """
    Convert and score one direction of the parallel test split.

    Args:
        model (TrainedModel): Trained system
        test_manifest (CorpusManifest): Regime test manifest (PPG paths set)
        direction (Direction): Source and target language
        out_dir (Path): Receives converted/ and evaluation_<dir>.tsv
        settings (GenerationSettings, optional): Conversion options
        cfg (McdConfig, optional): MCD coefficient range
        n_jobs (int): Parallel conversions

    Returns:
        SystemEvaluation with the mean MCD and the per-utterance table

    Raises:
        RegimeMismatchError: If the manifest regime differs from the model's
        MissingReferenceError: If a parallel reference is missing
    """
    regime = manifest_regime(test_manifest)
    converter = VoiceConverter(model, settings)
    converter.check_regime(regime)
    pairs = plan_pairs(test_manifest, direction)

    out_dir = Path(out_dir)
    converted_dir = out_dir / CONVERTED_DIR
    converter.convert_batch(test_manifest, [pair.job for pair in pairs], regime, converted_dir, n_jobs=n_jobs)
    table = score_persisted(test_manifest, direction, converted_dir, cfg)
    table.to_csv(out_dir / f"evaluation_{direction.slug}.tsv", sep="\t", index=False)

    mean_mcd = float(np.mean(table["mcd"]))
    logger.info(
        "system_evaluated",
        direction=direction.label,
        regime=regime.regime_name,
        variant=model.arch.variant,
        pairs=len(table),
        mean_mcd=round(mean_mcd, 4),
        source_mcd=round(float(np.mean(table["source_mcd"])), 4),
        f0_rmse=round(float(table["f0_rmse"].mean()), 4),
    )
    return SystemEvaluation(direction=direction, mean_mcd=mean_mcd, table=table)
