from typing import Dict, List, Tuple

from ..data_collection.world_model import stream_rng
from ..feature_store.feature_definitions import LanguageId
from ..feature_store.manifest import CorpusManifest

SCHEDULE_STREAM = 11

Batch = Tuple[LanguageId, List[str]]


def language_batch_scheduler(
    manifest: CorpusManifest,
    batch_sequences: int,
    seed: int,
    epoch: int = 0,
) -> List[Batch]:
    """
    Plan one epoch of language-homogeneous minibatches.

    Utterances are shuffled within each language, cut into batches of up to
    `batch_sequences`, and the batches of the two languages are interleaved
    in proportion to their batch counts (A first on ties).

    Args:
        manifest (CorpusManifest): Utterances to schedule
        batch_sequences (int): Maximum sequences per batch
        seed (int): Training seed
        epoch (int): Epoch index; each epoch gets its own shuffle

    Returns:
        Ordered list of (language, utterance ids)
    """
    if batch_sequences < 1:
        raise ValueError("batch_sequences must be >= 1")

    per_language: Dict[LanguageId, List[List[str]]] = {}
    for lang_index, language in enumerate(LanguageId):
        ids = [record.utterance_id for record in manifest if record.language is language]
        if not ids:
            continue
        order = stream_rng(seed, SCHEDULE_STREAM, epoch, lang_index).permutation(len(ids))
        shuffled = [ids[i] for i in order]
        per_language[language] = [
            shuffled[start:start + batch_sequences] for start in range(0, len(shuffled), batch_sequences)
        ]

    emitted = {language: 0 for language in per_language}
    schedule: List[Batch] = []
    total = sum(len(batches) for batches in per_language.values())
    while len(schedule) < total:
        pending = [language for language in per_language if emitted[language] < len(per_language[language])]
        # the language furthest behind its proportional share goes next
        language = min(
            pending,
            key=lambda lang: ((emitted[lang] + 0.5) / len(per_language[lang]), list(LanguageId).index(lang)),
        )
        schedule.append((language, per_language[language][emitted[language]]))
        emitted[language] += 1
    return schedule


def count_batches(schedule: List[Batch]) -> Dict[LanguageId, int]:
    counts = {language: 0 for language in LanguageId}
    for language, _ in schedule:
        counts[language] += 1
    return counts

