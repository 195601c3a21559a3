import numpy as np
import pytest
from pydantic import ValidationError

from ml_pipeline.data_collection.corpus_config import GenerativeConfig
from ml_pipeline.data_collection.corpus_generator import (
    CORPUS_CONFIG_FILE,
    MANIFEST_FILE,
    TEST_MANIFEST_FILE,
    CorpusGenerator,
    load_corpus_config,
    load_world,
)
from ml_pipeline.data_collection.phone_recognizer import extract_ppg
from ml_pipeline.data_collection.world_model import WorldModel, stream_rng, synthetic_embedding
from ml_pipeline.exceptions import ManifestError
from ml_pipeline.feature_store.feature_definitions import LanguageId, PosteriorgramKind
from ml_pipeline.feature_store.feature_io import read_acoustic
from ml_pipeline.preprocessing.data_validator import DataValidator

from .conftest import BPPG, MPPG, tiny_generative_config


class TestGenerativeConfig:
    def test_default_dimensions(self):
        config = GenerativeConfig()
        assert (config.dim_a, config.dim_b, config.dim_mixed) == (21, 25, 45)
        assert config.acoustic_width == 43
        assert config.ppg_dim(BPPG) == 46
        assert config.input_dim(MPPG) == 45 + 16

    @pytest.mark.parametrize("regime", list(PosteriorgramKind))
    def test_ppg_dim_matches_recognizer_output(self, regime):
        config = tiny_generative_config()
        world = WorldModel(config)
        latent = world.sample_trajectory(LanguageId.A, stream_rng(0, 5)).latent
        ppg = extract_ppg(latent, regime, world)
        assert config.ppg_dim(regime) == ppg.frames.shape[1]
        assert config.input_dim(regime) == ppg.frames.shape[1] + config.speaker_dim

    def test_mono_widths(self):
        config = GenerativeConfig()
        assert config.ppg_dim(PosteriorgramKind.MONO_A) == 21
        assert config.input_dim(PosteriorgramKind.MONO_B) == 25 + 16

    @pytest.mark.parametrize(
        "overrides",
        [
            {"min_frames": 50, "max_frames": 40},
            {"validation_per_speaker": 4},
            {"unknown_field": 1},
            {"language_divergence": 0.0},
        ],
    )
    def test_invalid_configs_rejected(self, overrides):
        with pytest.raises(ValidationError):
            tiny_generative_config(**overrides)


class TestWorldModel:
    def test_same_seed_same_world(self):
        first, second = WorldModel(tiny_generative_config()), WorldModel(tiny_generative_config())
        np.testing.assert_array_equal(first.rendering[LanguageId.B], second.rendering[LanguageId.B])
        np.testing.assert_array_equal(first.anchors[LanguageId.A], second.anchors[LanguageId.A])

    def test_renderings_differ(self):
        assert WorldModel(tiny_generative_config()).rendering_gap > 1e-6

    def test_streams_do_not_depend_on_call_order(self):
        first = stream_rng(3, 1, 7).standard_normal(4)
        stream_rng(3, 1, 8).standard_normal(100)
        np.testing.assert_array_equal(first, stream_rng(3, 1, 7).standard_normal(4))

    def test_synthetic_embedding_is_unit_norm(self):
        embedding = synthetic_embedding("A01", 16, seed=0)
        assert np.linalg.norm(embedding.values) == pytest.approx(1.0)

    def test_genders_alternate(self):
        world = WorldModel(tiny_generative_config())
        assert [world.speakers[s].gender for s in ("A00", "A01", "B00", "B01")] == ["F", "M", "F", "M"]

    def test_trajectory_respects_frame_range(self):
        config = tiny_generative_config()
        world = WorldModel(config)
        trajectory = world.sample_trajectory(LanguageId.A, stream_rng(0, 99))
        assert config.min_frames <= trajectory.num_frames <= config.max_frames
        assert not trajectory.voiced[0] and not trajectory.voiced[-1]


class TestCorpusGenerator:
    def test_default_plan_sizes(self):
        generator = CorpusGenerator(GenerativeConfig())
        train_jobs = generator.plan_training_jobs()
        assert len(train_jobs) == 240
        assert sum(job.split == "valid" for job in train_jobs) == 40
        assert len(generator.plan_test_jobs()) == 48

    def test_identifiers(self, tiny_corpus):
        ids = [r.utterance_id for r in tiny_corpus.manifest]
        assert ids[:4] == ["A00_000", "A00_001", "A00_002", "A00_003"]
        assert tiny_corpus.manifest["A00_003"].split == "valid"
        test_record = tiny_corpus.test_manifest["B01_TA00"]
        assert test_record.content_id == "TA00"
        assert test_record.content_language is LanguageId.A
        assert test_record.language is LanguageId.B

    def test_parallel_renders_share_frame_counts(self, tiny_corpus):
        by_content = {}
        for record in tiny_corpus.test_manifest:
            by_content.setdefault(record.content_id, set()).add(record.num_frames)
        assert all(len(counts) == 1 for counts in by_content.values())

    def test_output_files(self, tiny_corpus):
        root = tiny_corpus.root
        for name in (CORPUS_CONFIG_FILE, MANIFEST_FILE, TEST_MANIFEST_FILE):
            assert (root / name).exists()
        assert load_corpus_config(root) == tiny_corpus.config
        np.testing.assert_array_equal(load_world(root).silence_anchor, tiny_corpus.world.silence_anchor)

    def test_missing_corpus_config(self, tmp_path):
        with pytest.raises(ManifestError):
            load_corpus_config(tmp_path)

    def test_bit_identical_across_worker_counts(self, tmp_path, tiny_config):
        CorpusGenerator(tiny_config, n_jobs=1).generate(tmp_path / "serial")
        CorpusGenerator(tiny_config, n_jobs=3).generate(tmp_path / "threaded")
        for name in ("acoustic/A01_002.xvcf", "acoustic/B00_TB00.xvcf", "latent/B01_000.xvcf", MANIFEST_FILE):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "threaded" / name).read_bytes()

    def test_seed_changes_corpus(self, tmp_path, tiny_corpus):
        CorpusGenerator(tiny_generative_config(seed=8)).generate(tmp_path)
        other = read_acoustic(tmp_path / "acoustic/A00_000.xvcf")
        ours = read_acoustic(tiny_corpus.root / "acoustic/A00_000.xvcf")
        assert other.frames.shape != ours.frames.shape or not np.array_equal(other.frames, ours.frames)


class TestDataValidator:
    @pytest.mark.parametrize("regime", [BPPG, MPPG])
    def test_extracted_corpus_is_valid(self, tiny_corpus, regime):
        validator = DataValidator(tiny_corpus.config.dim_a)
        for manifest in (tiny_corpus.regime_manifests[regime], tiny_corpus.regime_test_manifests[regime]):
            report = validator.validate_corpus(manifest)
            assert report.empty, report.head().to_string()

    def test_missing_file_reported(self, tiny_corpus):
        record = tiny_corpus.manifest["A00_000"]
        broken = tiny_corpus.manifest.with_updates({record.utterance_id: {"acoustic_path": "acoustic/nope.xvcf"}})
        problems = DataValidator(tiny_corpus.config.dim_a).validate_record(broken, broken["A00_000"])
        assert len(problems) == 1
        assert "does not exist" in problems[0]

    def test_frame_count_mismatch_reported(self, tiny_corpus):
        record = tiny_corpus.manifest["A00_000"]
        broken = tiny_corpus.manifest.with_updates({"A00_000": {"num_frames": record.num_frames + 1}})
        problems = DataValidator(tiny_corpus.config.dim_a).validate_record(broken, broken["A00_000"])
        assert any("frames" in problem for problem in problems)
