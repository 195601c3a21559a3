"""
Ground-truth generative process of the synthetic bilingual corpus.

Phones of both languages are anchors in one latent space (plus a shared
silence anchor). A smoothed latent trajectory is articulated by a fixed map
h(z) = tanh(W z + b) and rendered to mel-cepstra by a language-specific
matrix R_lang; speakers add an offset S e_spk and their own pitch register.
"""
import hashlib
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import structlog

from ..exceptions import DimensionMismatchError
from ..feature_store.feature_definitions import AcousticSequence, LanguageId, SpeakerEmbedding
from ..model_deployment.parameter_generation import apply_deltas
from .corpus_config import GenerativeConfig

logger = structlog.get_logger(__name__)

# stream ids for counter-based random streams
WORLD_STREAM = 0
TRAIN_UTTERANCE_STREAM = 1
TEST_CONTENT_STREAM = 2
TEST_RENDER_STREAM = 3
EMBEDDING_STREAM = 4
SPEAKER_STREAM = 5

FEMALE_BASE_LOG_F0 = float(np.log(220.0))
MALE_BASE_LOG_F0 = float(np.log(120.0))


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, *keys); independent of call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


def string_key(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    language: LanguageId
    gender: str
    base_log_f0: float
    embedding: SpeakerEmbedding


@dataclass(frozen=True)
class LatentTrajectory:
    """Latent path of one utterance and the voicing state of every frame."""

    latent: np.ndarray
    voiced: np.ndarray

    @property
    def num_frames(self) -> int:
        return int(self.latent.shape[0])

    def to_matrix(self) -> np.ndarray:
        return np.hstack([self.latent, self.voiced[:, np.newaxis].astype(np.float64)])

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "LatentTrajectory":
        return cls(latent=matrix[:, :-1].copy(), voiced=matrix[:, -1] >= 0.5)


def synthetic_embedding(speaker_id: str, dim: int, seed: int) -> SpeakerEmbedding:
    """Deterministic pseudo-random unit vector keyed by (speaker_id, seed)."""
    rng = stream_rng(seed, EMBEDDING_STREAM, string_key(speaker_id))
    values = rng.standard_normal(dim)
    return SpeakerEmbedding(speaker_id=speaker_id, values=values / np.linalg.norm(values))


def speaker_ids(language: LanguageId, count: int) -> List[str]:
    return [f"{language.value}{index:02d}" for index in range(count)]


class WorldModel:
    """Deterministic function of a GenerativeConfig (seed included)."""

    def __init__(self, config: GenerativeConfig):
        self.config = config
        rng = stream_rng(config.seed, WORLD_STREAM)
        latent_dim, mcc_dim = config.latent_dim, config.mcc_dim

        self.anchors: Dict[LanguageId, np.ndarray] = {
            LanguageId.A: config.anchor_scale * rng.standard_normal((config.phones_a, latent_dim)),
            LanguageId.B: config.anchor_scale * rng.standard_normal((config.phones_b, latent_dim)),
        }
        self.silence_anchor = config.anchor_scale * rng.standard_normal(latent_dim)

        self.articulation_weight = rng.standard_normal((mcc_dim, latent_dim)) / np.sqrt(latent_dim)
        self.articulation_bias = 0.1 * rng.standard_normal(mcc_dim)

        render_a = self._random_rendering(rng, mcc_dim)
        independent = self._random_rendering(rng, mcc_dim)
        angle = 0.5 * np.pi * config.language_divergence
        render_b = np.cos(angle) * render_a + np.sin(angle) * independent
        self.rendering: Dict[LanguageId, np.ndarray] = {LanguageId.A: render_a, LanguageId.B: render_b}

        self.speaker_map = config.speaker_scale * rng.standard_normal((mcc_dim, config.speaker_dim))
        self.pitch_direction = rng.standard_normal(latent_dim) / np.sqrt(latent_dim)
        self.contour_amplitude: Dict[LanguageId, float] = {
            LanguageId.A: float(rng.uniform(0.05, 0.3)),
            LanguageId.B: float(rng.uniform(0.05, 0.3)),
        }
        self.ap_direction = rng.standard_normal(latent_dim) / np.sqrt(latent_dim)

        self.speakers: Dict[str, SpeakerProfile] = {}
        for language in LanguageId:
            for index, speaker_id in enumerate(speaker_ids(language, config.speakers_per_language)):
                speaker_rng = stream_rng(config.seed, SPEAKER_STREAM, string_key(speaker_id))
                gender = "F" if index % 2 == 0 else "M"
                base = FEMALE_BASE_LOG_F0 if gender == "F" else MALE_BASE_LOG_F0
                self.speakers[speaker_id] = SpeakerProfile(
                    speaker_id=speaker_id,
                    language=language,
                    gender=gender,
                    base_log_f0=base + float(speaker_rng.uniform(-0.1, 0.1)),
                    embedding=synthetic_embedding(speaker_id, config.speaker_dim, config.seed),
                )

        gap = float(np.linalg.norm(render_a - render_b, ord=2))
        assert gap > 1e-6, "language renderings must differ"
        logger.debug("world_model_built", seed=config.seed, rendering_gap=gap)

    @staticmethod
    def _random_rendering(rng: np.random.Generator, dim: int) -> np.ndarray:
        # orthogonal matrices keep the rendered scale comparable across languages
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        return q * np.sign(np.diag(r))

    @property
    def rendering_gap(self) -> float:
        """Spectral norm of R_A - R_B."""
        return float(np.linalg.norm(self.rendering[LanguageId.A] - self.rendering[LanguageId.B], ord=2))

    def class_anchors(self, languages: Tuple[LanguageId, ...]) -> np.ndarray:
        """Anchors of the given languages in order, silence last."""
        blocks = [self.anchors[language] for language in languages]
        return np.vstack(blocks + [self.silence_anchor[np.newaxis, :]])

    def sample_trajectory(self, language: LanguageId, rng: np.random.Generator) -> LatentTrajectory:
        """
        Random phone sequence of a language between boundary silences, smoothed
        by an exponential moving average toward each segment's anchor.
        """
        cfg = self.config
        num_frames = int(rng.integers(cfg.min_frames, cfg.max_frames + 1))
        boundary = min(cfg.boundary_silence, max(1, num_frames // 4))

        anchors = self.anchors[language]
        targets = np.empty((num_frames, cfg.latent_dim))
        voiced = np.zeros(num_frames, dtype=bool)
        targets[:boundary] = self.silence_anchor
        targets[num_frames - boundary:] = self.silence_anchor

        t = boundary
        while t < num_frames - boundary:
            phone = int(rng.integers(anchors.shape[0]))
            duration = int(rng.integers(cfg.min_segment, cfg.max_segment + 1))
            end = min(t + duration, num_frames - boundary)
            targets[t:end] = anchors[phone]
            voiced[t:end] = True
            t = end

        latent = np.empty_like(targets)
        state = self.silence_anchor.copy()
        for frame in range(num_frames):
            state = cfg.smoothing * state + (1.0 - cfg.smoothing) * targets[frame]
            latent[frame] = state
        return LatentTrajectory(latent=latent, voiced=voiced)

    def articulate(self, latent: np.ndarray) -> np.ndarray:
        return np.tanh(latent @ self.articulation_weight.T + self.articulation_bias)

    def render(
        self,
        trajectory: LatentTrajectory,
        language: LanguageId,
        speaker_id: str,
        rng: np.random.Generator,
    ) -> AcousticSequence:
        """
        Render a latent trajectory as one speaker speaking with one language's
        acoustic rendering.

        Args:
            trajectory (LatentTrajectory): Latent content
            language (LanguageId): Rendering language (selects R_lang and the
                pitch contour amplitude)
            speaker_id (str): Speaker providing offset and pitch register
            rng (np.random.Generator): Source of observation noise

        Returns:
            AcousticSequence with statics, deltas and delta-deltas
        """
        if trajectory.latent.shape[1] != self.config.latent_dim:
            raise DimensionMismatchError(
                f"latent width {trajectory.latent.shape[1]} != world latent_dim {self.config.latent_dim}"
            )
        speaker = self.speakers[speaker_id]
        num_frames = trajectory.num_frames

        mcc = self.articulate(trajectory.latent) @ self.rendering[language].T
        mcc = mcc + self.speaker_map @ speaker.embedding.values
        if self.config.noise_sigma > 0:
            mcc = mcc + self.config.noise_sigma * rng.standard_normal(mcc.shape)

        vuv = trajectory.voiced.astype(np.float64)
        contour = self.contour_amplitude[language] * np.tanh(trajectory.latent @ self.pitch_direction)
        log_f0 = np.where(trajectory.voiced, speaker.base_log_f0 + contour, speaker.base_log_f0)
        ap = 0.5 + 0.25 * np.tanh(trajectory.latent @ self.ap_direction)

        frames = np.hstack([
            vuv.reshape(num_frames, 1),
            apply_deltas(mcc),
            apply_deltas(log_f0[:, np.newaxis]),
            apply_deltas(ap[:, np.newaxis]),
        ])
        return AcousticSequence(frames=frames, mcc_dim=self.config.mcc_dim)
