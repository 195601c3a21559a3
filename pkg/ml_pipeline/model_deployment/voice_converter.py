"""
End-to-end conversion of one source utterance to a target speaker:

    PPG -> [ppg | target embedding] -> trunk + target-language head
        -> de-standardize -> MLPG (MCC, logF0) -> cepstral postfilter
        -> log-linear F0 conversion -> AP copied from source -> VUV threshold
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from ..data_collection.corpus_generator import load_corpus_config
from ..exceptions import ConversionError, RegimeMismatchError, XlvcError
from ..feature_store.feature_definitions import (
    AcousticLayout,
    AcousticSequence,
    LanguageId,
    Posteriorgram,
    PosteriorgramKind,
    UtteranceRecord,
    build_input_frames,
)
from ..feature_store.feature_io import read_acoustic, read_posteriorgram, write_acoustic
from ..feature_store.manifest import CorpusManifest
from .f0_conversion import F0Stats, convert_f0
from .parameter_generation import GlobalVariances, apply_deltas, cepstral_postfilter, mlpg

CONVERSION_LOG = "conversion_log.jsonl"
VUV_THRESHOLD = 0.5

T = TypeVar("T")


class GenerationSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    postfilter_beta: float = Field(1.4, ge=1.0)
    f0_mode: Literal["linear", "network"] = "linear"


@dataclass(frozen=True)
class ConversionJob:
    utterance_id: str
    target_speaker: str

    @property
    def output_name(self) -> str:
        return f"{self.utterance_id}__to__{self.target_speaker}.xvcf"


def _stage(stage: str, utterance_id: str, fn: Callable[[], T]) -> T:
    try:
        return fn()
    except (ConversionError, RegimeMismatchError):
        raise
    except (XlvcError, ValueError, OSError, AssertionError, np.linalg.LinAlgError) as e:
        raise ConversionError(stage, e, utterance_id) from e


def _load_ppg(manifest: CorpusManifest, record: UtteranceRecord, model_regime: PosteriorgramKind) -> Posteriorgram:
    if not record.ppg_path:
        raise RegimeMismatchError(f"{record.utterance_id} has no {model_regime.regime_name} posteriorgram")
    dim_a = load_corpus_config(manifest.root).dim_a
    ppg = read_posteriorgram(manifest.resolve(record.ppg_path), dim_a)
    if ppg.kind is not model_regime:
        raise RegimeMismatchError(
            f"{record.utterance_id}: {ppg.kind.regime_name} posteriorgram does not match "
            f"the checkpoint regime {model_regime.regime_name}"
        )
    return ppg


class VoiceConverter:
    """Applies a trained modular network to source utterances."""

    def __init__(self, model: Any, settings: Optional[GenerationSettings] = None):
        """
        Args:
            model (TrainedModel): Trained network with its standardizers,
                embedding table and per-speaker F0 statistics
            settings (GenerationSettings, optional): Postfilter and F0 options
        """
        self.model = model
        self.settings = settings or GenerationSettings()
        self.layout = AcousticLayout.from_width(model.arch.output_dim)
        self.logger = structlog.get_logger(self.__class__.__name__)

        variances = model.output_scaler.variance
        self.mcc_variances = GlobalVariances.from_stacked(variances[self.layout.mcc])
        self.lf0_variances = GlobalVariances.from_stacked(variances[self.layout.lf0])

    def check_regime(self, regime: PosteriorgramKind) -> None:
        if regime is not self.model.regime:
            raise RegimeMismatchError(
                f"checkpoint was trained on {self.model.regime.regime_name} posteriorgrams, "
                f"conversion requested {regime.regime_name}"
            )

    def convert(
        self,
        manifest: CorpusManifest,
        record: UtteranceRecord,
        target_speaker: str,
        regime: PosteriorgramKind,
        target_f0: Optional[F0Stats] = None,
        out_path: Optional[Path] = None,
    ) -> AcousticSequence:
        """
        Convert one utterance.

        Args:
            manifest (CorpusManifest): Regime manifest holding `record`
            record (UtteranceRecord): Source utterance
            target_speaker (str): Speaker whose embedding conditions the network
            regime (PosteriorgramKind): Posteriorgram regime of the request
            target_f0 (F0Stats, optional): Target statistics; defaults to the
                target speaker's training statistics stored in the checkpoint
            out_path (Path, optional): Where to write the XVCF result

        Returns:
            Converted AcousticSequence

        Raises:
            RegimeMismatchError: If the checkpoint regime differs from `regime`
            ConversionError: Wrapping any failure with its pipeline stage
        """
        self.check_regime(regime)
        model = self.model
        uid = record.utterance_id

        embedding = _stage("embedding", uid, lambda: model.embedding(target_speaker))
        target_language = _stage("embedding", uid, lambda: _speaker_language(model, target_speaker))
        ppg = _stage("load_ppg", uid, lambda: _load_ppg(manifest, record, model.regime))
        source = _stage("load_source", uid, lambda: read_acoustic(manifest.resolve(record.acoustic_path)))
        if source.num_frames != ppg.num_frames:
            raise ConversionError("load_source", ValueError(
                f"acoustic has {source.num_frames} frames, posteriorgram {ppg.num_frames}"), uid)

        inputs = _stage("assemble_input", uid, lambda: build_input_frames(ppg, embedding))
        predicted = _stage("forward", uid, lambda: model.predict(inputs.rows, target_language))

        mcc = _stage("mlpg", uid, lambda: mlpg(predicted[:, self.layout.mcc], self.mcc_variances))
        mcc = _stage("postfilter", uid, lambda: cepstral_postfilter(mcc, self.settings.postfilter_beta))
        vuv = (predicted[:, 0] >= VUV_THRESHOLD).astype(np.float64)

        if self.settings.f0_mode == "network":
            log_f0 = _stage("f0", uid, lambda: mlpg(predicted[:, self.layout.lf0], self.lf0_variances)[:, 0])
        else:
            tgt = target_f0 if target_f0 is not None else _stage("f0", uid, lambda: model.speaker_f0(target_speaker))
            src = _stage("f0", uid, lambda: F0Stats.from_frames(source.log_f0, source.vuv))
            # the network voicing decides both the VUV channel and where F0 is converted;
            # unvoiced output frames carry the target base value
            log_f0 = np.where(vuv >= VUV_THRESHOLD, convert_f0(source.log_f0, vuv, src, tgt), tgt.mean_log_f0)

        frames = np.hstack([
            vuv[:, np.newaxis],
            apply_deltas(mcc),
            apply_deltas(log_f0[:, np.newaxis]),
            source.ap_stacked,
        ])
        converted = _stage("assemble_output", uid, lambda: AcousticSequence(frames=frames, mcc_dim=self.layout.mcc_dim))
        if out_path is not None:
            _stage("write", uid, lambda: write_acoustic(out_path, converted))
        self.logger.debug("utterance_converted", utterance_id=uid, target=target_speaker, frames=converted.num_frames)
        return converted

    def convert_batch(
        self,
        manifest: CorpusManifest,
        jobs: Sequence[ConversionJob],
        regime: PosteriorgramKind,
        out_dir: Path,
        n_jobs: int = 1,
    ) -> pd.DataFrame:
        """
        Convert many utterances in parallel and append the conversion log.

        Returns:
            One row per job: source, target, regime, checkpoint hash, output path
        """
        self.check_regime(regime)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        def run(job: ConversionJob) -> Dict[str, Any]:
            record = manifest[job.utterance_id]
            converted = self.convert(manifest, record, job.target_speaker, regime, out_path=out_dir / job.output_name)
            return {
                "source": job.utterance_id,
                "source_speaker": record.speaker_id,
                "source_language": record.language.value,
                "target": job.target_speaker,
                "target_language": _speaker_language(self.model, job.target_speaker).value,
                "regime": regime.regime_name,
                "checkpoint_hash": self.model.digest,
                "output": job.output_name,
                "num_frames": converted.num_frames,
            }

        rows: List[Dict[str, Any]] = list(Parallel(n_jobs=n_jobs, prefer="threads")(delayed(run)(job) for job in jobs))
        log = pd.DataFrame(rows)
        append_conversion_log(out_dir / CONVERSION_LOG, log)
        self.logger.info("batch_converted", utterances=len(rows), out_dir=str(out_dir))
        return log


def _speaker_language(model: Any, speaker_id: str) -> LanguageId:
    try:
        return model.speaker_languages[speaker_id]
    except KeyError:
        raise RegimeMismatchError(f"speaker {speaker_id} is unknown to this checkpoint") from None


def append_conversion_log(path: Path, log: pd.DataFrame) -> None:
    if log.empty:
        return
    text = log.to_json(orient="records", lines=True)
    if not text.endswith("\n"):
        text += "\n"
    with open(path, "a") as handle:
        handle.write(text)


def convert_utterance(
    model: Any,
    manifest: CorpusManifest,
    record: UtteranceRecord,
    target_speaker: str,
    regime: PosteriorgramKind,
    target_f0: Optional[F0Stats] = None,
    out_path: Optional[Path] = None,
    settings: Optional[GenerationSettings] = None,
) -> AcousticSequence:
    """Convert one source utterance with a trained model; see VoiceConverter.convert."""
    converter = VoiceConverter(model, settings)
    return converter.convert(manifest, record, target_speaker, regime, target_f0=target_f0, out_path=out_path)
