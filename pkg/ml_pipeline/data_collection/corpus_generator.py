from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import structlog
import yaml
from joblib import Parallel, delayed

from ..exceptions import ManifestError
from ..feature_store.feature_definitions import FeatureKind, LanguageId, UtteranceRecord
from ..feature_store.feature_io import write_acoustic, write_feature_file
from ..feature_store.manifest import CorpusManifest
from .corpus_config import GenerativeConfig
from .world_model import (
    TEST_CONTENT_STREAM,
    TEST_RENDER_STREAM,
    TRAIN_UTTERANCE_STREAM,
    LatentTrajectory,
    WorldModel,
    speaker_ids,
    stream_rng,
    string_key,
)

CORPUS_CONFIG_FILE = "corpus_config.yml"
MANIFEST_FILE = "manifest.jsonl"
TEST_MANIFEST_FILE = "test_manifest.jsonl"


@dataclass(frozen=True)
class _UtteranceJob:
    utterance_id: str
    speaker_id: str
    language: LanguageId
    split: str
    index: int
    content_id: str = ""
    content_language: Optional[LanguageId] = None


def load_corpus_config(corpus_dir: Path) -> GenerativeConfig:
    path = Path(corpus_dir) / CORPUS_CONFIG_FILE
    if not path.exists():
        raise ManifestError(f"{corpus_dir} has no {CORPUS_CONFIG_FILE}; not a generated corpus")
    with open(path, "r") as handle:
        return GenerativeConfig(**yaml.safe_load(handle))


def load_world(corpus_dir: Path) -> WorldModel:
    """Rebuild the world model of a generated corpus from its echoed config."""
    return WorldModel(load_corpus_config(corpus_dir))


class CorpusGenerator:
    """
    Writes a synthetic bilingual corpus: latent trajectories, acoustic
    features, the training/validation manifest and the parallel test manifest.
    """

    def __init__(self, config: GenerativeConfig, n_jobs: int = 1):
        """
        Args:
            config (GenerativeConfig): Corpus parameters
            n_jobs (int): Parallel workers; output does not depend on it
        """
        self.config = config
        self.n_jobs = n_jobs
        self.world = WorldModel(config)
        self.logger = structlog.get_logger(self.__class__.__name__)

    def plan_training_jobs(self) -> List[_UtteranceJob]:
        cfg = self.config
        jobs: List[_UtteranceJob] = []
        index = 0
        for language in LanguageId:
            for speaker_id in speaker_ids(language, cfg.speakers_per_language):
                for utt in range(cfg.utterances_per_speaker):
                    split = "valid" if utt >= cfg.utterances_per_speaker - cfg.validation_per_speaker else "train"
                    jobs.append(_UtteranceJob(f"{speaker_id}_{utt:03d}", speaker_id, language, split, index))
                    index += 1
        return jobs

    def plan_test_jobs(self) -> List[_UtteranceJob]:
        """Every speaker renders every test content in its own language."""
        cfg = self.config
        jobs: List[_UtteranceJob] = []
        for content_language in LanguageId:
            for content in range(cfg.test_contents_per_direction):
                content_id = f"T{content_language.value}{content:02d}"
                for language in LanguageId:
                    for speaker_id in speaker_ids(language, cfg.speakers_per_language):
                        jobs.append(_UtteranceJob(
                            f"{speaker_id}_{content_id}", speaker_id, language, "test", content,
                            content_id=content_id, content_language=content_language,
                        ))
        return jobs

    def _trajectory_and_rng(self, job: _UtteranceJob):
        seed = self.config.seed
        if job.split != "test":
            rng = stream_rng(seed, TRAIN_UTTERANCE_STREAM, job.index)
            return self.world.sample_trajectory(job.language, rng), rng
        assert job.content_language is not None
        lang_index = list(LanguageId).index(job.content_language)
        content_rng = stream_rng(seed, TEST_CONTENT_STREAM, lang_index, job.index)
        trajectory = self.world.sample_trajectory(job.content_language, content_rng)
        noise_rng = stream_rng(seed, TEST_RENDER_STREAM, lang_index, job.index, string_key(job.speaker_id))
        return trajectory, noise_rng

    def _render_job(self, job: _UtteranceJob, out_dir: Path) -> UtteranceRecord:
        trajectory, rng = self._trajectory_and_rng(job)
        acoustic = self.world.render(trajectory, job.language, job.speaker_id, rng)

        latent_rel = f"latent/{job.utterance_id}.xvcf"
        acoustic_rel = f"acoustic/{job.utterance_id}.xvcf"
        write_feature_file(out_dir / latent_rel, FeatureKind.LATENT_TRAJECTORY, trajectory.to_matrix())
        write_acoustic(out_dir / acoustic_rel, acoustic)

        return UtteranceRecord(
            utterance_id=job.utterance_id,
            speaker_id=job.speaker_id,
            language=job.language,
            acoustic_path=acoustic_rel,
            num_frames=trajectory.num_frames,
            latent_path=latent_rel,
            split=job.split,
            content_id=job.content_id,
            content_language=job.content_language,
            gender=self.world.speakers[job.speaker_id].gender,
        )

    def generate(self, out_dir: Path) -> Tuple[CorpusManifest, CorpusManifest]:
        """
        Generate the corpus under `out_dir`.

        Returns:
            Tuple of (training/validation manifest, test manifest)
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        try:
            with open(out_dir / CORPUS_CONFIG_FILE, "w") as handle:
                yaml.safe_dump(self.config.model_dump(), handle, sort_keys=True)

            train_records = self._render_all(self.plan_training_jobs(), out_dir)
            test_records = self._render_all(self.plan_test_jobs(), out_dir)
        except OSError as e:
            self.logger.error("corpus_generation_failed", out_dir=str(out_dir), error=str(e))
            raise

        manifest = CorpusManifest(train_records, out_dir)
        test_manifest = CorpusManifest(test_records, out_dir)
        manifest.save(out_dir / MANIFEST_FILE)
        test_manifest.save(out_dir / TEST_MANIFEST_FILE)

        self.logger.info(
            "corpus_generated",
            out_dir=str(out_dir),
            records=len(manifest),
            test_records=len(test_manifest),
            rendering_gap=round(self.world.rendering_gap, 4),
        )
        return manifest, test_manifest

    def _render_all(self, jobs: List[_UtteranceJob], out_dir: Path) -> List[UtteranceRecord]:
        return list(
            Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(self._render_job)(job, out_dir) for job in jobs
            )
        )


def generate_corpus(config: GenerativeConfig, out_dir: Path, n_jobs: int = 1) -> CorpusManifest:
    """
    Generate a synthetic bilingual corpus.

    Args:
        config (GenerativeConfig): Corpus parameters
        out_dir (Path): Destination directory
        n_jobs (int): Parallel workers

    Returns:
        The training/validation manifest (the parallel test split is written
        next to it as test_manifest.jsonl)
    """
    manifest, _ = CorpusGenerator(config, n_jobs=n_jobs).generate(out_dir)
    return manifest
