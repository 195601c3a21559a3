from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..feature_store.feature_definitions import PosteriorgramKind


class GenerativeConfig(BaseModel):
    """
    Parameters of the synthetic bilingual corpus.

    The same config (seed included) always yields a bit-identical corpus.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    latent_dim: int = Field(12, ge=1)
    phones_a: int = Field(20, ge=1)
    phones_b: int = Field(24, ge=1)
    mcc_dim: int = Field(12, ge=2)
    speaker_dim: int = Field(16, ge=1)
    speakers_per_language: int = Field(4, ge=1)
    utterances_per_speaker: int = Field(30, ge=1)
    validation_per_speaker: int = Field(5, ge=0)
    test_contents_per_direction: int = Field(3, ge=0)
    min_frames: int = Field(150, ge=1)
    max_frames: int = Field(250, ge=1)
    temperature: float = Field(0.5, gt=0.0)
    noise_sigma: float = Field(0.05, ge=0.0)
    language_divergence: float = Field(1.0, gt=0.0, le=1.0)
    anchor_scale: float = Field(1.5, gt=0.0)
    speaker_scale: float = Field(0.5, ge=0.0)
    smoothing: float = Field(0.7, ge=0.0, lt=1.0)
    min_segment: int = Field(6, ge=1)
    max_segment: int = Field(16, ge=1)
    boundary_silence: int = Field(10, ge=1)
    embedding_mode: str = Field("synthetic", pattern="^(synthetic|mcc_stats)$")
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_ranges(self) -> "GenerativeConfig":
        if self.max_frames < self.min_frames:
            raise ValueError("max_frames must be >= min_frames")
        if self.max_segment < self.min_segment:
            raise ValueError("max_segment must be >= min_segment")
        if self.validation_per_speaker >= self.utterances_per_speaker:
            raise ValueError("validation_per_speaker must leave at least one training utterance")
        return self

    @property
    def frames_per_utterance(self) -> Tuple[int, int]:
        return self.min_frames, self.max_frames

    @property
    def dim_a(self) -> int:
        """Language-A recognizer classes (phones plus shared silence)."""
        return self.phones_a + 1

    @property
    def dim_b(self) -> int:
        return self.phones_b + 1

    @property
    def dim_mixed(self) -> int:
        return self.phones_a + self.phones_b + 1

    @property
    def acoustic_width(self) -> int:
        return 3 * self.mcc_dim + 7

    def ppg_dim(self, regime: PosteriorgramKind) -> int:
        widths = {
            PosteriorgramKind.MONO_A: self.dim_a,
            PosteriorgramKind.MONO_B: self.dim_b,
            PosteriorgramKind.BILINGUAL_STACKED: self.dim_a + self.dim_b,
            PosteriorgramKind.MIXED_LINGUAL: self.dim_mixed,
        }
        return widths[regime]

    def input_dim(self, regime: PosteriorgramKind) -> int:
        """Network input width: posteriorgram plus speaker embedding."""
        return self.ppg_dim(regime) + self.speaker_dim
