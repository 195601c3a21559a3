import json

import numpy as np
import pandas as pd
import pytest

from ml_pipeline.data_collection.corpus_config import GenerativeConfig
from ml_pipeline.exceptions import UsageError, XlvcError
from ml_pipeline.model_development.model_configuration import BUDGET_TOLERANCE, TrainingConfig
from ml_pipeline.model_evaluation.comparative_analysis import (
    CELL_FILE,
    SYSTEMS,
    ComparisonHarness,
    assemble_report,
    run_comparison,
    system_name,
)
from ml_pipeline.model_training.train_pipeline import ModularTrainer, train

from .conftest import BPPG, MPPG, tiny_generative_config, tiny_training


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out_root = tmp_path_factory.mktemp("experiment")
    report = run_comparison(
        tiny_generative_config(),
        seeds=[0, 1, 2],
        training=tiny_training(max_epochs=1),
        out_root=out_root,
        arch_preset="smoke",
    )
    return report, out_root


class TestSystemNames:
    def test_names(self):
        assert system_name(BPPG, "LI") == "bPPG-LI"
        assert system_name(MPPG, "LS") == "mPPG-LS"
        assert system_name(MPPG, "LI", budget_matched=True) == "mPPG-LI-matched"

    def test_plan_covers_four_systems(self):
        harness = ComparisonHarness(tiny_generative_config(), tiny_training(), arch_preset="smoke")
        assert sorted(cell.system for cell in harness.plan_cells(0)) == sorted(SYSTEMS)

    def test_budget_matched_cells(self):
        harness = ComparisonHarness(tiny_generative_config(), tiny_training(), arch_preset="smoke",
                                    budget_matched_li=True)
        cells = {cell.system: cell for cell in harness.plan_cells(0)}
        assert len(cells) == 6
        for prefix in ("bPPG", "mPPG"):
            ls = cells[f"{prefix}-LS"].arch.parameter_count()
            matched = cells[f"{prefix}-LI-matched"].arch.parameter_count()
            assert abs(matched - ls) <= BUDGET_TOLERANCE * ls


class TestComparisonRun:
    def test_report_shape(self, experiment):
        report, _ = experiment
        assert report.seeds == [0, 1, 2]
        assert len(report.cells) == 3 * 4 * 2
        assert set(report.cells["status"]) == {"ok"}
        assert len(report.summary) == 8
        assert list(report.sign_tests["seeds"]) == [3, 3, 3]
        assert "f0_rmse" in report.summary.columns
        assert (report.cells["f0_rmse"].dropna() >= 0).all()
        assert "F0 RMSE" in report.to_text()

    def test_artifacts(self, experiment):
        _, out_root = experiment
        for name in ("report.tsv", "summary.tsv", "sign_tests.tsv", "summary.txt"):
            assert (out_root / name).exists()
        cell = json.loads((out_root / "seed_1" / "mPPG-LS" / CELL_FILE).read_text())
        assert cell["status"] == "ok"
        assert cell["epochs"] == 1
        assert (out_root / "seed_1" / "corpus" / "test_manifest.bppg.jsonl").exists()

    def test_summary_text_mentions_every_system(self, experiment):
        report, _ = experiment
        text = report.to_text()
        for system in SYSTEMS:
            assert system in text
        assert "Sign tests" in text

    def test_reassembly_is_identical(self, experiment):
        report, out_root = experiment
        again = assemble_report(out_root)
        pd.testing.assert_frame_equal(again.cells, report.cells)
        pd.testing.assert_frame_equal(again.summary, report.summary)
        assert (out_root / "summary.txt").read_text() == again.to_text()

    def test_summary_matches_cells(self, experiment):
        report, _ = experiment
        row = report.summary[(report.summary["system"] == "mPPG-LS") & (report.summary["direction"] == "A->B")]
        cells = report.cells[(report.cells["system"] == "mPPG-LS") & (report.cells["direction"] == "A->B")]
        assert float(row["mcd_mean"].iloc[0]) == pytest.approx(cells["mcd"].mean())
        assert report.mean_mcd("mPPG-LS") == pytest.approx(
            report.cells[report.cells["system"] == "mPPG-LS"]["mcd"].mean()
        )

    def test_source_bar_per_direction(self, experiment):
        report, _ = experiment
        assert sorted(report.source_bar()) == ["A->B", "B->A"]


class TestHarnessFailures:
    def test_too_few_seeds(self, tmp_path):
        with pytest.raises(UsageError, match="at least 3 seeds"):
            run_comparison(tiny_generative_config(), [0, 1], tiny_training(), tmp_path, arch_preset="smoke")

    def test_empty_root(self, tmp_path):
        with pytest.raises(XlvcError):
            assemble_report(tmp_path)

    def test_diverged_cells_are_reported_invalid(self, mocker, tmp_path):
        mocker.patch.object(ModularTrainer, "batch_gradients", return_value=float("nan"))
        report = run_comparison(
            tiny_generative_config(), [0, 1, 2], tiny_training(max_epochs=1), tmp_path, arch_preset="smoke"
        )
        assert set(report.cells["status"]) == {"diverged"}
        assert report.cells["mcd"].isna().all()
        assert report.summary["valid_cells"].sum() == 0
        assert report.sign_tests.empty
        assert "diverged" in (tmp_path / "seed_0" / "bPPG-LS" / CELL_FILE).read_text()

    @pytest.mark.parametrize("error", [ValueError("no voiced frames"), OSError("disk full"), np.linalg.LinAlgError("singular")])
    def test_runtime_errors_mark_cells_failed(self, mocker, tmp_path, error):
        mocker.patch("ml_pipeline.model_evaluation.comparative_analysis.train", side_effect=error)
        report = run_comparison(
            tiny_generative_config(), [0, 1, 2], tiny_training(max_epochs=1), tmp_path, arch_preset="smoke"
        )
        assert set(report.cells["status"]) == {"failed"}
        assert report.summary["valid_cells"].sum() == 0
        cell = json.loads((tmp_path / "seed_1" / "mPPG-LI" / CELL_FILE).read_text())
        assert cell["status"] == "failed"
        assert str(error) in cell["error"]


@pytest.mark.slow
class TestSyntheticClaims:
    """Full-size runs; selected with `pytest -m slow`."""

    def test_language_specific_heads_win(self, tmp_path):
        report = run_comparison(GenerativeConfig(), [0, 1, 2, 3, 4], TrainingConfig(max_epochs=60), tmp_path)
        tests = report.sign_tests.set_index(["better", "worse"])
        assert tests.loc[("bPPG-LS", "bPPG-LI"), "wins"] >= 4
        assert tests.loc[("mPPG-LS", "mPPG-LI"), "wins"] >= 4
        assert report.mean_mcd("mPPG-LS") <= report.mean_mcd("bPPG-LS")

    def test_noise_free_corpus_is_learnable(self, tmp_path):
        from ml_pipeline.data_collection.corpus_generator import CorpusGenerator
        from ml_pipeline.data_collection.phone_recognizer import extract_corpus_ppgs
        from ml_pipeline.model_development.model_configuration import ArchitectureConfig

        config = GenerativeConfig(noise_sigma=0.0)
        generator = CorpusGenerator(config)
        manifest, _ = generator.generate(tmp_path)
        mppg = extract_corpus_ppgs(manifest, MPPG, generator.world)
        arch = ArchitectureConfig.from_preset("toy", config.input_dim(MPPG), config.acoustic_width, "LS")
        state = train(arch, mppg, TrainingConfig(max_epochs=200))
        assert np.isfinite(state.best_mean_valid)
        assert state.best_mean_valid < 1e-2
