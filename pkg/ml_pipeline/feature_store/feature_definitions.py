"""
Frame-level feature types shared by every stage of the pipeline.

All arrays are held as read-only binary64 numpy arrays; instances are
immutable after construction and safe to share between threads.
"""
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, Optional, Tuple

import numpy as np

from ..exceptions import DimensionMismatchError


class LanguageId(str, Enum):
    """The two languages of an experiment (English/Mandarin roles)."""

    A = "A"
    B = "B"

    @property
    def other(self) -> "LanguageId":
        return LanguageId.B if self is LanguageId.A else LanguageId.A


class FeatureKind(IntEnum):
    """kind_code registry of the XVCF format."""

    ACOUSTIC = 0
    MONO_A_PPG = 1
    MONO_B_PPG = 2
    BILINGUAL_STACKED_PPG = 3
    MIXED_LINGUAL_PPG = 4
    SPEAKER_EMBEDDING = 5
    LATENT_TRAJECTORY = 6


class PosteriorgramKind(Enum):
    MONO_A = "mono_a"
    MONO_B = "mono_b"
    BILINGUAL_STACKED = "bilingual_stacked"
    MIXED_LINGUAL = "mixed_lingual"

    @property
    def feature_kind(self) -> FeatureKind:
        return _PPG_FEATURE_KINDS[self]

    @classmethod
    def from_feature_kind(cls, code: int) -> "PosteriorgramKind":
        for kind, feature_kind in _PPG_FEATURE_KINDS.items():
            if feature_kind == code:
                return kind
        raise ValueError(f"kind_code {code} is not a posteriorgram")

    @classmethod
    def from_regime(cls, regime: str) -> "PosteriorgramKind":
        """Map a CLI regime name (bppg, mppg, mono_a, ...) to a kind."""
        aliases = {
            "bppg": cls.BILINGUAL_STACKED,
            "mppg": cls.MIXED_LINGUAL,
        }
        key = regime.lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def regime_name(self) -> str:
        return {
            PosteriorgramKind.BILINGUAL_STACKED: "bppg",
            PosteriorgramKind.MIXED_LINGUAL: "mppg",
        }.get(self, self.value)


_PPG_FEATURE_KINDS: Dict[PosteriorgramKind, FeatureKind] = {
    PosteriorgramKind.MONO_A: FeatureKind.MONO_A_PPG,
    PosteriorgramKind.MONO_B: FeatureKind.MONO_B_PPG,
    PosteriorgramKind.BILINGUAL_STACKED: FeatureKind.BILINGUAL_STACKED_PPG,
    PosteriorgramKind.MIXED_LINGUAL: FeatureKind.MIXED_LINGUAL_PPG,
}


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Posteriorgram:
    """
    Per-frame phone posteriors.

    `block_dims` records how a row is partitioned into independently
    normalized blocks: one block for monolingual and mixed-lingual
    posteriorgrams, (dim_a, dim_b) for the bilingual stacked kind.
    """

    kind: PosteriorgramKind
    frames: np.ndarray
    block_dims: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", _frozen(self.frames))
        if self.frames.ndim != 2:
            raise DimensionMismatchError("posteriorgram frames must be T x dim")
        if sum(self.block_dims) != self.frames.shape[1]:
            raise DimensionMismatchError(
                f"block dims {self.block_dims} do not add up to dim {self.frames.shape[1]}"
            )
        expected_blocks = 2 if self.kind is PosteriorgramKind.BILINGUAL_STACKED else 1
        if len(self.block_dims) != expected_blocks:
            raise DimensionMismatchError(
                f"{self.kind.value} posteriorgram needs {expected_blocks} block(s)"
            )

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def expected_row_sum(self) -> float:
        return float(len(self.block_dims))


@dataclass(frozen=True)
class SpeakerEmbedding:
    speaker_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(np.ravel(self.values)))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class AcousticLayout:
    """
    Column layout of an acoustic frame:
    [vuv | mcc | d_mcc | dd_mcc | lf0 | d_lf0 | dd_lf0 | ap | d_ap | dd_ap].
    """

    mcc_dim: int

    @property
    def width(self) -> int:
        return 3 * self.mcc_dim + 7

    @property
    def vuv(self) -> slice:
        return slice(0, 1)

    @property
    def mcc(self) -> slice:
        return slice(1, 1 + 3 * self.mcc_dim)

    @property
    def mcc_static(self) -> slice:
        return slice(1, 1 + self.mcc_dim)

    @property
    def lf0(self) -> slice:
        start = 1 + 3 * self.mcc_dim
        return slice(start, start + 3)

    @property
    def ap(self) -> slice:
        start = 4 + 3 * self.mcc_dim
        return slice(start, start + 3)

    @classmethod
    def from_width(cls, width: int) -> "AcousticLayout":
        if width < 10 or (width - 7) % 3 != 0:
            raise DimensionMismatchError(f"{width} is not a valid acoustic frame width")
        return cls(mcc_dim=(width - 7) // 3)


@dataclass(frozen=True)
class AcousticSequence:
    frames: np.ndarray
    mcc_dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", _frozen(self.frames))
        if self.frames.ndim != 2 or self.frames.shape[1] != self.layout.width:
            raise DimensionMismatchError(
                f"acoustic frames must be T x {self.layout.width}, got {self.frames.shape}"
            )

    @property
    def layout(self) -> AcousticLayout:
        return AcousticLayout(self.mcc_dim)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def vuv(self) -> np.ndarray:
        return self.frames[:, 0]

    @property
    def voiced(self) -> np.ndarray:
        return self.frames[:, 0] >= 0.5

    @property
    def mcc_static(self) -> np.ndarray:
        return self.frames[:, self.layout.mcc_static]

    @property
    def mcc_stacked(self) -> np.ndarray:
        return self.frames[:, self.layout.mcc]

    @property
    def log_f0(self) -> np.ndarray:
        return self.frames[:, self.layout.lf0.start]

    @property
    def lf0_stacked(self) -> np.ndarray:
        return self.frames[:, self.layout.lf0]

    @property
    def ap_stacked(self) -> np.ndarray:
        return self.frames[:, self.layout.ap]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "AcousticSequence":
        return cls(frames=matrix, mcc_dim=AcousticLayout.from_width(matrix.shape[1]).mcc_dim)


@dataclass(frozen=True)
class InputFrameSequence:
    """Network input rows [ppg_t | spk], the embedding repeated on every frame."""

    ppg: Posteriorgram
    spk: SpeakerEmbedding
    rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        tiled = np.broadcast_to(self.spk.values, (self.ppg.num_frames, self.spk.dim))
        object.__setattr__(self, "rows", _frozen(np.hstack([self.ppg.frames, tiled])))

    @property
    def width(self) -> int:
        return self.ppg.dim + self.spk.dim


def build_input_frames(ppg: Posteriorgram, embedding: SpeakerEmbedding) -> InputFrameSequence:
    return InputFrameSequence(ppg=ppg, spk=embedding)


@dataclass(frozen=True)
class UtteranceRecord:
    """
    Manifest entry of one utterance.

    Paths are stored relative to the manifest's directory when written.
    `ppg_path` stays None until a posteriorgram regime has been extracted.
    """

    utterance_id: str
    speaker_id: str
    language: LanguageId
    acoustic_path: str
    num_frames: int
    ppg_path: Optional[str] = None
    latent_path: Optional[str] = None
    split: str = "train"
    content_id: str = ""
    content_language: Optional[LanguageId] = None
    gender: str = ""

    def to_dict(self) -> Dict[str, object]:
        return {
            "utterance_id": self.utterance_id,
            "speaker_id": self.speaker_id,
            "language": self.language.value,
            "ppg_path": self.ppg_path,
            "acoustic_path": self.acoustic_path,
            "num_frames": int(self.num_frames),
            "latent_path": self.latent_path,
            "split": self.split,
            "content_id": self.content_id,
            "content_language": self.content_language.value if self.content_language else None,
            "gender": self.gender,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "UtteranceRecord":
        content_language = data.get("content_language")
        return cls(
            utterance_id=str(data["utterance_id"]),
            speaker_id=str(data["speaker_id"]),
            language=LanguageId(data["language"]),
            ppg_path=_optional_str(data.get("ppg_path")),
            acoustic_path=str(data["acoustic_path"]),
            num_frames=int(data["num_frames"]),  # type: ignore[arg-type]
            latent_path=_optional_str(data.get("latent_path")),
            split=str(data.get("split") or "train"),
            content_id=str(data.get("content_id") or ""),
            content_language=LanguageId(content_language) if content_language else None,
            gender=str(data.get("gender") or ""),
        )


def _optional_str(value: object) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, float) and np.isnan(value):
        return None
    text = str(value)
    return text or None
