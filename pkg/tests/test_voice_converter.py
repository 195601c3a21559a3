import numpy as np
import pandas as pd
import pytest

from ml_pipeline.exceptions import ConversionError, RegimeMismatchError
from ml_pipeline.feature_store.feature_io import read_acoustic
from ml_pipeline.model_deployment.f0_conversion import F0Stats, convert_f0
from ml_pipeline.model_deployment.voice_converter import (
    CONVERSION_LOG,
    ConversionJob,
    GenerationSettings,
    VoiceConverter,
    convert_utterance,
)

from .conftest import BPPG, MPPG

SOURCE = "A00_TA00"


def _force_voicing(mocker, model, vuv):
    """Replace the predicted VUV channel with a fixed pattern."""
    predict = model.predict

    def with_voicing(rows, language):
        predicted = np.array(predict(rows, language))
        predicted[:, 0] = vuv
        return predicted

    mocker.patch.object(model, "predict", side_effect=with_voicing)


@pytest.fixture(scope="module")
def model(trained_mppg_ls):
    return trained_mppg_ls.model


@pytest.fixture(scope="module")
def test_manifest(tiny_corpus):
    return tiny_corpus.regime_test_manifests[MPPG]


class TestVoiceConverter:
    def test_output_layout(self, model, test_manifest):
        record = test_manifest[SOURCE]
        converted = convert_utterance(model, test_manifest, record, "B01", MPPG)
        assert converted.num_frames == record.num_frames
        assert converted.frames.shape[1] == model.arch.output_dim
        assert set(np.unique(converted.vuv)) <= {0.0, 1.0}

    def test_aperiodicity_copied_from_source(self, model, test_manifest):
        record = test_manifest[SOURCE]
        source = read_acoustic(test_manifest.resolve(record.acoustic_path))
        converted = convert_utterance(model, test_manifest, record, "B00", MPPG)
        np.testing.assert_array_equal(converted.ap_stacked, source.ap_stacked)

    def test_f0_takes_target_statistics(self, model, test_manifest, mocker):
        record = test_manifest[SOURCE]
        source = read_acoustic(test_manifest.resolve(record.acoustic_path))
        target = model.speaker_f0("B01")
        _force_voicing(mocker, model, source.vuv)
        converted = convert_utterance(model, test_manifest, record, "B01", MPPG)
        voiced = source.voiced
        np.testing.assert_array_equal(converted.voiced, voiced)
        assert converted.log_f0[voiced].mean() == pytest.approx(target.mean_log_f0)
        assert converted.log_f0[voiced].std() == pytest.approx(target.std_log_f0)
        np.testing.assert_array_equal(converted.log_f0[~voiced], target.mean_log_f0)

    def test_explicit_target_f0(self, model, test_manifest):
        record = test_manifest[SOURCE]
        source = read_acoustic(test_manifest.resolve(record.acoustic_path))
        target = F0Stats(4.0, 0.1, 1)
        converted = convert_utterance(model, test_manifest, record, "B01", MPPG, target_f0=target)
        src = F0Stats.from_frames(source.log_f0, source.vuv)
        expected = convert_f0(source.log_f0, np.ones(source.num_frames), src, target)
        voiced = converted.voiced
        np.testing.assert_allclose(converted.log_f0[voiced], expected[voiced], rtol=1e-12)
        np.testing.assert_array_equal(converted.log_f0[~voiced], 4.0)

    def test_f0_follows_output_voicing_where_source_disagrees(self, model, test_manifest, mocker):
        record = test_manifest[SOURCE]
        source = read_acoustic(test_manifest.resolve(record.acoustic_path))
        target = model.speaker_f0("B01")
        flipped = 1.0 - source.vuv
        _force_voicing(mocker, model, flipped)
        converted = convert_utterance(model, test_manifest, record, "B01", MPPG)
        np.testing.assert_array_equal(converted.vuv, flipped)
        src = F0Stats.from_frames(source.log_f0, source.vuv)
        expected = convert_f0(source.log_f0, np.ones(source.num_frames), src, target)
        voiced = converted.voiced
        assert voiced.any() and (~voiced).any()
        np.testing.assert_allclose(converted.log_f0[voiced], expected[voiced], rtol=1e-12)
        np.testing.assert_array_equal(converted.log_f0[~voiced], target.mean_log_f0)

    def test_network_f0_mode(self, model, test_manifest):
        settings = GenerationSettings(f0_mode="network")
        converted = convert_utterance(model, test_manifest, test_manifest[SOURCE], "B01", MPPG, settings=settings)
        assert np.all(np.isfinite(converted.log_f0))

    def test_postfilter_changes_only_higher_coefficients(self, model, test_manifest):
        record = test_manifest[SOURCE]
        plain = convert_utterance(model, test_manifest, record, "B01", MPPG,
                                  settings=GenerationSettings(postfilter_beta=1.0))
        emphasized = convert_utterance(model, test_manifest, record, "B01", MPPG,
                                       settings=GenerationSettings(postfilter_beta=2.0))
        np.testing.assert_array_equal(plain.mcc_static[:, :2], emphasized.mcc_static[:, :2])
        np.testing.assert_allclose(emphasized.mcc_static[:, 2:], 2.0 * plain.mcc_static[:, 2:])

    def test_deterministic(self, model, test_manifest):
        record = test_manifest[SOURCE]
        first = convert_utterance(model, test_manifest, record, "B00", MPPG)
        np.testing.assert_array_equal(first.frames, convert_utterance(model, test_manifest, record, "B00", MPPG).frames)

    def test_regime_mismatch(self, model, tiny_corpus):
        manifest = tiny_corpus.regime_test_manifests[BPPG]
        with pytest.raises(RegimeMismatchError):
            convert_utterance(model, manifest, manifest[SOURCE], "B01", BPPG)
        with pytest.raises(RegimeMismatchError):
            convert_utterance(model, manifest, manifest[SOURCE], "B01", MPPG)

    def test_unknown_target_speaker(self, model, test_manifest):
        with pytest.raises(ConversionError) as info:
            convert_utterance(model, test_manifest, test_manifest[SOURCE], "B77", MPPG)
        assert info.value.stage == "embedding"
        assert info.value.utterance_id == SOURCE

    def test_missing_acoustic_file(self, model, test_manifest):
        broken = test_manifest.with_updates({SOURCE: {"acoustic_path": "acoustic/missing.xvcf"}})
        with pytest.raises(ConversionError) as info:
            convert_utterance(model, broken, broken[SOURCE], "B01", MPPG)
        assert info.value.stage == "load_source"

    def test_writes_output(self, model, test_manifest, tmp_path):
        out = tmp_path / "converted.xvcf"
        converted = convert_utterance(model, test_manifest, test_manifest[SOURCE], "B01", MPPG, out_path=out)
        np.testing.assert_allclose(read_acoustic(out).frames, converted.frames, rtol=1e-6, atol=1e-6)

    def test_self_conversion_stays_near_validation_error(self, trained_mppg_ls, tiny_corpus):
        model = trained_mppg_ls.model
        manifest = tiny_corpus.regime_manifests[MPPG]
        record = manifest.by_split("valid").records[0]
        converter = VoiceConverter(model, GenerationSettings(postfilter_beta=1.0))
        converted = converter.convert(manifest, record, record.speaker_id, MPPG)
        reference = read_acoustic(manifest.resolve(record.acoustic_path))
        scale = model.output_scaler.std[reference.layout.mcc_static]
        error = np.sqrt(np.mean(((converted.mcc_static - reference.mcc_static) / scale) ** 2))
        assert error < 3.0 * np.sqrt(trained_mppg_ls.state.best_mean_valid)


class TestConvertBatch:
    def test_batch_log(self, model, test_manifest, tmp_path):
        jobs = [ConversionJob(SOURCE, "B00"), ConversionJob(SOURCE, "B01"), ConversionJob("B00_TB00", "A01")]
        log = VoiceConverter(model).convert_batch(test_manifest, jobs, MPPG, tmp_path, n_jobs=2)
        assert list(log["target"]) == ["B00", "B01", "A01"]
        assert set(log["checkpoint_hash"]) == {model.digest}
        assert (tmp_path / "A00_TA00__to__B01.xvcf").exists()
        written = pd.read_json(tmp_path / CONVERSION_LOG, lines=True)
        assert len(written) == 3

    def test_log_is_appended(self, model, test_manifest, tmp_path):
        converter = VoiceConverter(model)
        converter.convert_batch(test_manifest, [ConversionJob(SOURCE, "B00")], MPPG, tmp_path)
        converter.convert_batch(test_manifest, [ConversionJob(SOURCE, "B01")], MPPG, tmp_path)
        assert len((tmp_path / CONVERSION_LOG).read_text().strip().splitlines()) == 2
