"""Shared fixtures: a tiny synthetic corpus with both PPG regimes extracted, and models trained on it."""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from ml_pipeline.data_collection.corpus_config import GenerativeConfig
from ml_pipeline.data_collection.corpus_generator import MANIFEST_FILE, TEST_MANIFEST_FILE, CorpusGenerator
from ml_pipeline.data_collection.phone_recognizer import extract_corpus_ppgs
from ml_pipeline.data_collection.world_model import WorldModel
from ml_pipeline.feature_store.feature_definitions import LanguageId, PosteriorgramKind, UtteranceRecord
from ml_pipeline.feature_store.manifest import CorpusManifest
from ml_pipeline.model_development.model_configuration import ArchitectureConfig, TrainingConfig
from ml_pipeline.model_training.train_pipeline import BEST_CHECKPOINT, TrainState, train
from ml_pipeline.model_training.trained_model import TrainedModel

BPPG = PosteriorgramKind.BILINGUAL_STACKED
MPPG = PosteriorgramKind.MIXED_LINGUAL


def tiny_generative_config(seed: int = 7, **overrides) -> GenerativeConfig:
    values = dict(
        latent_dim=4,
        phones_a=5,
        phones_b=6,
        mcc_dim=4,
        speaker_dim=4,
        speakers_per_language=2,
        utterances_per_speaker=4,
        validation_per_speaker=1,
        test_contents_per_direction=1,
        min_frames=20,
        max_frames=30,
        seed=seed,
    )
    values.update(overrides)
    return GenerativeConfig(**values)


def tiny_training(**overrides) -> TrainingConfig:
    values = dict(max_epochs=2, batch_sequences=3, patience=5, seed=0)
    values.update(overrides)
    return TrainingConfig(**values)


def tiny_arch(config: GenerativeConfig, regime: PosteriorgramKind, variant: str = "LS") -> ArchitectureConfig:
    return ArchitectureConfig.from_preset("smoke", config.input_dim(regime), config.acoustic_width, variant)


def make_record(utterance_id: str, language: LanguageId, speaker_id: str = "", **fields) -> UtteranceRecord:
    return UtteranceRecord(
        utterance_id=utterance_id,
        speaker_id=speaker_id or f"{language.value}00",
        language=language,
        acoustic_path=f"acoustic/{utterance_id}.xvcf",
        num_frames=fields.pop("num_frames", 10),
        **fields,
    )


@dataclass
class TinyCorpus:
    root: Path
    config: GenerativeConfig
    world: WorldModel
    manifest: CorpusManifest
    test_manifest: CorpusManifest
    regime_manifests: Dict[PosteriorgramKind, CorpusManifest]
    regime_test_manifests: Dict[PosteriorgramKind, CorpusManifest]


@pytest.fixture(scope="session")
def tiny_config() -> GenerativeConfig:
    return tiny_generative_config()


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory, tiny_config) -> TinyCorpus:
    root = tmp_path_factory.mktemp("corpus")
    generator = CorpusGenerator(tiny_config)
    manifest, test_manifest = generator.generate(root)
    regime_manifests, regime_test_manifests = {}, {}
    for regime in (BPPG, MPPG):
        regime_manifests[regime] = extract_corpus_ppgs(manifest, regime, generator.world, MANIFEST_FILE)
        regime_test_manifests[regime] = extract_corpus_ppgs(test_manifest, regime, generator.world, TEST_MANIFEST_FILE)
    return TinyCorpus(
        root=root,
        config=tiny_config,
        world=generator.world,
        manifest=manifest,
        test_manifest=test_manifest,
        regime_manifests=regime_manifests,
        regime_test_manifests=regime_test_manifests,
    )


@dataclass
class TrainedRun:
    out_dir: Path
    state: TrainState

    @property
    def model(self) -> TrainedModel:
        return TrainedModel.load(self.out_dir / BEST_CHECKPOINT)


@pytest.fixture(scope="session")
def trained_mppg_ls(tmp_path_factory, tiny_corpus) -> TrainedRun:
    out_dir = tmp_path_factory.mktemp("mppg_ls")
    arch = tiny_arch(tiny_corpus.config, MPPG, "LS")
    state = train(arch, tiny_corpus.regime_manifests[MPPG], tiny_training(), out_dir=out_dir)
    return TrainedRun(out_dir, state)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
