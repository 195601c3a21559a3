"""
Corpus manifest: JSON lines, one UtteranceRecord per line.

Field names: utterance_id, speaker_id, language, ppg_path, acoustic_path,
num_frames, latent_path, split, content_id, content_language, gender.
Paths are relative to the directory holding the manifest.
"""
import hashlib
import json
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence

import pandas as pd
import structlog

from ..exceptions import ManifestError
from .feature_definitions import LanguageId, UtteranceRecord

logger = structlog.get_logger(__name__)

MANIFEST_COLUMNS = [
    "utterance_id",
    "speaker_id",
    "language",
    "ppg_path",
    "acoustic_path",
    "num_frames",
    "latent_path",
    "split",
    "content_id",
    "content_language",
    "gender",
]


class CorpusManifest:
    """Ordered collection of UtteranceRecords anchored at a root directory."""

    def __init__(self, records: Iterable[UtteranceRecord], root: Path):
        self.records: List[UtteranceRecord] = list(records)
        self.root = Path(root)
        ids = [record.utterance_id for record in self.records]
        if len(ids) != len(set(ids)):
            raise ManifestError("duplicate utterance ids in manifest")
        self._index: Dict[str, UtteranceRecord] = {r.utterance_id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    def __getitem__(self, utterance_id: str) -> UtteranceRecord:
        try:
            return self._index[utterance_id]
        except KeyError:
            raise ManifestError(f"utterance {utterance_id} not in manifest") from None

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.root / path

    def filter(self, predicate: Callable[[UtteranceRecord], bool]) -> "CorpusManifest":
        return CorpusManifest([r for r in self.records if predicate(r)], self.root)

    def by_split(self, *splits: str) -> "CorpusManifest":
        return self.filter(lambda record: record.split in splits)

    def by_language(self, language: LanguageId) -> "CorpusManifest":
        return self.filter(lambda record: record.language is language)

    def by_speaker(self, speaker_id: str) -> "CorpusManifest":
        return self.filter(lambda record: record.speaker_id == speaker_id)

    def speakers(self, language: Optional[LanguageId] = None) -> List[str]:
        seen: Dict[str, None] = {}
        for record in self.records:
            if language is None or record.language is language:
                seen.setdefault(record.speaker_id, None)
        return list(seen)

    def languages(self) -> List[LanguageId]:
        return [lang for lang in LanguageId if any(r.language is lang for r in self.records)]

    def with_updates(self, updates: Dict[str, Dict[str, object]]) -> "CorpusManifest":
        """Return a copy with per-utterance field replacements applied."""
        records = [
            replace(record, **updates[record.utterance_id])  # type: ignore[arg-type]
            if record.utterance_id in updates
            else record
            for record in self.records
        ]
        return CorpusManifest(records, self.root)

    def counts(self) -> pd.DataFrame:
        """Utterance counts per language, speaker and split."""
        frame = self.to_frame()
        if frame.empty:
            return pd.DataFrame(columns=["language", "speaker_id", "split", "utterances"])
        return (
            frame.groupby(["language", "speaker_id", "split"], sort=True)
            .size()
            .reset_index(name="utterances")
        )

    def digest(self) -> str:
        """SHA-256 over the records in utterance-id order, independent of where the manifest lives."""
        rows = sorted((r.to_dict() for r in self.records), key=lambda row: str(row["utterance_id"]))
        canonical = json.dumps(rows, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.records], columns=MANIFEST_COLUMNS)

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if not self.records:
            path.write_text("")
        else:
            self.to_frame().to_json(path, orient="records", lines=True)
        logger.info("manifest_written", path=str(path), records=len(self.records))
        return path

    @classmethod
    def load(cls, path: Path) -> "CorpusManifest":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"manifest not found: {path}")
        if path.stat().st_size == 0:
            return cls([], path.parent)
        try:
            frame = pd.read_json(path, lines=True, dtype=False, convert_dates=False)
        except ValueError as e:
            raise ManifestError(f"cannot parse manifest {path}: {e}") from e

        missing = {"utterance_id", "speaker_id", "language", "acoustic_path", "num_frames"} - set(
            frame.columns
        )
        if missing:
            raise ManifestError(f"manifest {path} lacks fields {sorted(missing)}")
        records = [
            UtteranceRecord.from_dict(row)
            for row in frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
        ]
        return cls(records, path.parent)


def merge_manifests(manifests: Sequence[CorpusManifest]) -> CorpusManifest:
    if not manifests:
        raise ManifestError("nothing to merge")
    root = manifests[0].root
    if any(m.root != root for m in manifests):
        raise ManifestError("manifests with different roots cannot be merged")
    return CorpusManifest([r for m in manifests for r in m.records], root)
