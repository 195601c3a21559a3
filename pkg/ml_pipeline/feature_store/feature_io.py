"""
XVCF feature files.

Layout (little-endian throughout):

    offset  size  field
    0       4     magic b"XVCF"
    4       2     version (uint16) = 1
    6       2     kind_code (uint16), see FeatureKind
    8       4     dim (uint32)
    12      4     T (uint32)
    16      4*T*dim  float32 payload, row-major
"""
import os
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import structlog

from ..exceptions import (
    BadMagicError,
    DimensionMismatchError,
    NonFiniteError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .feature_definitions import (
    AcousticSequence,
    FeatureKind,
    Posteriorgram,
    PosteriorgramKind,
    SpeakerEmbedding,
)

logger = structlog.get_logger(__name__)

MAGIC = b"XVCF"
VERSION = 1
HEADER = struct.Struct("<4sHHII")
HEADER_SIZE = HEADER.size  # 16

PathLike = Union[str, os.PathLike]


def write_feature_file(path: PathLike, kind_code: int, matrix: np.ndarray) -> None:
    """
    Write a T x dim matrix as an XVCF file.

    Args:
        path (PathLike): Destination file
        kind_code (int): FeatureKind code of the payload
        matrix (np.ndarray): T x dim real matrix, stored as binary32

    Raises:
        DimensionMismatchError: If the matrix is not 2-D or has a zero dimension
        OSError: On I/O failure
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    num_frames, dim = matrix.shape
    if num_frames < 1 or dim < 1:
        raise DimensionMismatchError(f"feature matrix needs T >= 1 and dim >= 1, got {matrix.shape}")

    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes(order="C")
    header = HEADER.pack(MAGIC, VERSION, int(kind_code), dim, num_frames)

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(payload)


def read_feature_file(path: PathLike) -> Tuple[int, np.ndarray]:
    """
    Read an XVCF file.

    Args:
        path (PathLike): File to read

    Returns:
        Tuple of kind_code and the T x dim matrix as binary64

    Raises:
        BadMagicError, UnsupportedVersionError, TruncatedPayloadError
    """
    with open(path, "rb") as handle:
        raw = handle.read()

    if not raw or not MAGIC.startswith(raw[:4]):
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayloadError(str(path), HEADER_SIZE, len(raw))
    _, version, kind_code, dim, num_frames = HEADER.unpack_from(raw)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported XVCF version {version}")

    expected = 4 * num_frames * dim
    actual = len(raw) - HEADER_SIZE
    if actual != expected:
        raise TruncatedPayloadError(str(path), expected, actual)

    values = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE, count=num_frames * dim)
    matrix = values.astype(np.float64).reshape(num_frames, dim)
    return int(kind_code), matrix


def read_posteriorgram(path: PathLike, dim_a: int) -> Posteriorgram:
    """
    Load a posteriorgram file.

    Args:
        path (PathLike): XVCF file holding a PPG kind
        dim_a (int): Class count of the language-A block, used to split
            bilingual stacked rows

    Returns:
        Posteriorgram with the kind recorded in the file
    """
    kind_code, matrix = read_feature_file(path)
    kind = PosteriorgramKind.from_feature_kind(kind_code)
    if kind is PosteriorgramKind.BILINGUAL_STACKED:
        block_dims: Tuple[int, ...] = (dim_a, matrix.shape[1] - dim_a)
    else:
        block_dims = (matrix.shape[1],)
    return Posteriorgram(kind=kind, frames=matrix, block_dims=block_dims)


def write_posteriorgram(path: PathLike, ppg: Posteriorgram) -> None:
    write_feature_file(path, ppg.kind.feature_kind, ppg.frames)


def read_acoustic(path: PathLike) -> AcousticSequence:
    kind_code, matrix = read_feature_file(path)
    if kind_code != FeatureKind.ACOUSTIC:
        raise DimensionMismatchError(f"{path}: kind_code {kind_code} is not acoustic")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError(f"{path}: non-finite acoustic values")
    return AcousticSequence.from_matrix(matrix)


def write_acoustic(path: PathLike, sequence: AcousticSequence) -> None:
    write_feature_file(path, FeatureKind.ACOUSTIC, sequence.frames)


def write_speaker_embedding(path: PathLike, embedding: SpeakerEmbedding) -> None:
    write_feature_file(path, FeatureKind.SPEAKER_EMBEDDING, embedding.values[np.newaxis, :])


def read_speaker_embedding(path: PathLike, speaker_id: str) -> SpeakerEmbedding:
    kind_code, matrix = read_feature_file(path)
    if kind_code != FeatureKind.SPEAKER_EMBEDDING:
        raise DimensionMismatchError(f"{path}: kind_code {kind_code} is not a speaker embedding")
    return SpeakerEmbedding(speaker_id=speaker_id, values=matrix[0])
