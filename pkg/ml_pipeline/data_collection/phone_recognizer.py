"""
Toy phone recognizers over the shared latent space.

Each recognizer is a distance softmax over its anchor set:
row_t = softmax_k(-||z_t - a_k||^2 / tau).
Two monolingual recognizers stacked give the bilingual posteriorgram; one
recognizer over the union of both inventories gives the mixed-lingual one.
Class order is language-A phones, language-B phones, silence last.
"""
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import structlog
from joblib import Parallel, delayed
from scipy.special import softmax

from ..exceptions import RegimeMismatchError
from ..feature_store.feature_definitions import (
    FeatureKind,
    LanguageId,
    Posteriorgram,
    PosteriorgramKind,
)
from ..feature_store.feature_io import read_feature_file, write_posteriorgram
from ..feature_store.manifest import CorpusManifest
from .world_model import LatentTrajectory, WorldModel

logger = structlog.get_logger(__name__)


def _distance_softmax(latent: np.ndarray, anchors: np.ndarray, temperature: float) -> np.ndarray:
    sq_dist = np.sum((latent[:, np.newaxis, :] - anchors[np.newaxis, :, :]) ** 2, axis=2)
    return softmax(-sq_dist / temperature, axis=1)


def extract_ppg(
    latent: np.ndarray,
    regime: PosteriorgramKind,
    world: WorldModel,
    temperature: Optional[float] = None,
) -> Posteriorgram:
    """
    Simulate posteriorgram extraction for one utterance.

    Args:
        latent (np.ndarray): T x latent_dim trajectory
        regime (PosteriorgramKind): Extraction regime
        world (WorldModel): World the utterance was generated from
        temperature (float, optional): Softmax temperature, defaults to the
            corpus temperature

    Returns:
        Posteriorgram of the requested kind

    Raises:
        RegimeMismatchError: If the trajectory does not belong to the world or
            the regime is unknown
    """
    if not isinstance(regime, PosteriorgramKind):
        raise RegimeMismatchError(f"unknown regime {regime!r}")
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[1] != world.config.latent_dim:
        raise RegimeMismatchError(
            f"trajectory of shape {latent.shape} does not match world latent_dim {world.config.latent_dim}"
        )
    tau = world.config.temperature if temperature is None else float(temperature)
    if tau <= 0:
        raise ValueError("temperature must be positive")

    if regime is PosteriorgramKind.MONO_A:
        frames = _distance_softmax(latent, world.class_anchors((LanguageId.A,)), tau)
        block_dims: Tuple[int, ...] = (frames.shape[1],)
    elif regime is PosteriorgramKind.MONO_B:
        frames = _distance_softmax(latent, world.class_anchors((LanguageId.B,)), tau)
        block_dims = (frames.shape[1],)
    elif regime is PosteriorgramKind.BILINGUAL_STACKED:
        mono_a = _distance_softmax(latent, world.class_anchors((LanguageId.A,)), tau)
        mono_b = _distance_softmax(latent, world.class_anchors((LanguageId.B,)), tau)
        frames = np.hstack([mono_a, mono_b])
        block_dims = (mono_a.shape[1], mono_b.shape[1])
    else:
        frames = _distance_softmax(latent, world.class_anchors((LanguageId.A, LanguageId.B)), tau)
        block_dims = (frames.shape[1],)

    return Posteriorgram(kind=regime, frames=frames, block_dims=block_dims)


def ppg_manifest_name(manifest_name: str, regime: PosteriorgramKind) -> str:
    """manifest.jsonl -> manifest.mppg.jsonl"""
    stem = manifest_name[: -len(".jsonl")] if manifest_name.endswith(".jsonl") else manifest_name
    return f"{stem}.{regime.regime_name}.jsonl"


def _extract_one(manifest: CorpusManifest, utterance_id: str, regime: PosteriorgramKind,
                 world: WorldModel) -> Tuple[str, str]:
    record = manifest[utterance_id]
    if not record.latent_path:
        raise RegimeMismatchError(f"{utterance_id} has no latent trajectory to recognize")
    kind_code, matrix = read_feature_file(manifest.resolve(record.latent_path))
    if kind_code != FeatureKind.LATENT_TRAJECTORY:
        raise RegimeMismatchError(f"{record.latent_path} is not a latent trajectory")
    trajectory = LatentTrajectory.from_matrix(matrix)
    ppg = extract_ppg(trajectory.latent, regime, world)
    relative = Path("ppg") / regime.regime_name / f"{utterance_id}.xvcf"
    write_posteriorgram(manifest.root / relative, ppg)
    return utterance_id, relative.as_posix()


def extract_corpus_ppgs(
    manifest: CorpusManifest,
    regime: PosteriorgramKind,
    world: WorldModel,
    manifest_name: str = "manifest.jsonl",
    n_jobs: int = 1,
) -> CorpusManifest:
    """
    Run one recognizer regime over every utterance of a manifest.

    Writes ppg/<regime>/<utterance_id>.xvcf next to the manifest and a regime
    manifest (e.g. manifest.bppg.jsonl) whose ppg_path fields point at them.

    Returns:
        The regime manifest
    """
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_extract_one)(manifest, record.utterance_id, regime, world) for record in manifest
    )
    updates: Dict[str, Dict[str, object]] = {uid: {"ppg_path": path} for uid, path in results}
    regime_manifest = manifest.with_updates(updates)
    regime_manifest.save(manifest.root / ppg_manifest_name(manifest_name, regime))
    logger.info("ppgs_extracted", regime=regime.regime_name, utterances=len(results))
    return regime_manifest
