"""
XVCK checkpoint files.

    XVCK 1\\n
    <header byte length>\\n
    <UTF-8 JSON header>
    <binary64 little-endian tensor values, declaration order, row-major>

The JSON header carries {"tensors": [{"name", "shape"}, ...]} plus free-form
metadata (seed, config hash, architecture, standardization, history).
"""
import hashlib
import json
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import structlog

from ..exceptions import CheckpointError

logger = structlog.get_logger(__name__)

CHECKPOINT_MAGIC = "XVCK"
CHECKPOINT_VERSION = 1

PathLike = Union[str, os.PathLike]


@dataclass
class Checkpoint:
    metadata: Dict[str, Any]
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)


def save_checkpoint(path: PathLike, tensors: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> Path:
    """
    Write tensors and metadata as an XVCK checkpoint.

    The file is written next to its destination and renamed into place.

    Args:
        path (PathLike): Destination file
        tensors (Dict[str, np.ndarray]): Named tensors in declaration order
        metadata (Dict[str, Any]): JSON-serializable header fields

    Returns:
        Path of the written checkpoint
    """
    if "tensors" in metadata:
        raise CheckpointError("metadata key 'tensors' is reserved")
    header = dict(metadata)
    header["tensors"] = [{"name": name, "shape": list(np.shape(value))} for name, value in tensors.items()]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    try:
        with open(partial, "wb") as handle:
            handle.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode("ascii"))
            handle.write(f"{len(header_bytes)}\n".encode("ascii"))
            handle.write(header_bytes)
            for value in tensors.values():
                handle.write(np.ascontiguousarray(value, dtype="<f8").tobytes(order="C"))
        os.replace(partial, path)
    except OSError as e:
        logger.error("checkpoint_write_failed", path=str(path), error=str(e))
        raise
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Read an XVCK checkpoint.

    Raises:
        CheckpointError: On a bad magic line, unknown version, malformed
            header or a payload whose length disagrees with the header
    """
    with open(path, "rb") as handle:
        raw = handle.read()

    first_end = raw.find(b"\n")
    second_end = raw.find(b"\n", first_end + 1)
    if first_end < 0 or second_end < 0:
        raise CheckpointError(f"{path}: not an XVCK checkpoint")
    magic_line = raw[:first_end].decode("ascii", errors="replace").split()
    if len(magic_line) != 2 or magic_line[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an XVCK checkpoint")
    if magic_line[1] != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"{path}: unsupported checkpoint version {magic_line[1]}")

    try:
        header_len = int(raw[first_end + 1:second_end])
        header_start = second_end + 1
        header = json.loads(raw[header_start:header_start + header_len].decode("utf-8"))
        layout = header.pop("tensors")
    except (ValueError, KeyError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint header ({e})") from e

    offset = header_start + header_len
    expected = offset + 8 * sum(int(np.prod(entry["shape"], dtype=np.int64)) for entry in layout)
    if len(raw) != expected:
        raise CheckpointError(f"{path}: payload is {len(raw) - offset} bytes, header declares {expected - offset}")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in layout:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = values.astype(np.float64).reshape(shape)
        offset += 8 * count
    return Checkpoint(metadata=header, tensors=tensors)


def file_digest(path: PathLike) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
