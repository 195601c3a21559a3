from typing import Dict, Iterable, Optional

import numpy as np
import structlog

from ..exceptions import ManifestError
from ..feature_store.feature_definitions import SpeakerEmbedding
from ..feature_store.feature_io import read_acoustic
from ..feature_store.manifest import CorpusManifest
from .world_model import synthetic_embedding

logger = structlog.get_logger(__name__)

EMBEDDING_MODES = ("synthetic", "mcc_stats")


def speaker_embedding_provider(
    speaker_id: str,
    mode: str,
    dim: int,
    seed: int,
    manifest: Optional[CorpusManifest] = None,
) -> SpeakerEmbedding:
    """
    Produce the conditioning vector of a speaker.

    Args:
        speaker_id (str): Speaker to embed
        mode (str): 'synthetic' for a deterministic pseudo-random unit vector
            keyed by (speaker_id, seed); 'mcc_stats' for the unit-normalized
            mean and standard deviation of the speaker's training MCC statics
        dim (int): Embedding dimension
        seed (int): Corpus seed (synthetic mode)
        manifest (CorpusManifest, optional): Corpus to read training
            utterances from (mcc_stats mode)

    Returns:
        SpeakerEmbedding of length `dim` with unit Euclidean norm
    """
    if dim < 1:
        raise ValueError(f"embedding dim must be >= 1, got {dim}")
    if mode == "synthetic":
        return synthetic_embedding(speaker_id, dim, seed)
    if mode != "mcc_stats":
        raise ValueError(f"unknown embedding mode {mode!r}, expected one of {EMBEDDING_MODES}")

    if manifest is None:
        raise ManifestError("mcc_stats embeddings need a corpus manifest")
    records = manifest.by_speaker(speaker_id).by_split("train")
    if len(records) == 0:
        raise ManifestError(f"no training utterances for speaker {speaker_id}")

    statics = np.vstack([read_acoustic(records.resolve(r.acoustic_path)).mcc_static for r in records])
    summary = np.concatenate([statics.mean(axis=0), statics.std(axis=0)])
    values = np.zeros(dim)
    values[: min(dim, summary.shape[0])] = summary[:dim]
    norm = np.linalg.norm(values)
    if norm == 0:
        raise ManifestError(f"degenerate MCC statistics for speaker {speaker_id}")
    return SpeakerEmbedding(speaker_id=speaker_id, values=values / norm)


def embedding_table(
    speakers: Iterable[str],
    mode: str,
    dim: int,
    seed: int,
    manifest: Optional[CorpusManifest] = None,
) -> Dict[str, SpeakerEmbedding]:
    table = {
        speaker_id: speaker_embedding_provider(speaker_id, mode, dim, seed, manifest)
        for speaker_id in speakers
    }
    logger.debug("speaker_embeddings_ready", mode=mode, speakers=len(table), dim=dim)
    return table
