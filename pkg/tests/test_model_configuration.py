import pytest
from pydantic import ValidationError

from ml_pipeline.feature_store.feature_definitions import LanguageId
from ml_pipeline.model_development.model_configuration import (
    BUDGET_TOLERANCE,
    ArchitectureConfig,
    TrainingConfig,
    match_parameter_budget,
)


class TestArchitectureConfig:
    def test_presets(self):
        paper = ArchitectureConfig.from_preset("paper", 100, 127, "ls")
        assert (paper.projection_width, paper.blstm_width, paper.head_width) == (256, 256, 128)
        assert paper.variant == "LS"
        toy = ArchitectureConfig.from_preset("toy", 40, 43)
        assert (toy.projection_width, toy.blstm_width, toy.head_width) == (32, 32, 16)

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            ArchitectureConfig.from_preset("huge", 10, 13)

    def test_output_width_must_hold_an_acoustic_frame(self):
        with pytest.raises(ValidationError):
            ArchitectureConfig(input_dim=4, output_dim=5)

    def test_head_names(self):
        ls = ArchitectureConfig.from_preset("smoke", 10, 13, "LS")
        li = ArchitectureConfig.from_preset("smoke", 10, 13, "LI")
        assert ls.head_names() == {LanguageId.A: "head_A", LanguageId.B: "head_B"}
        assert set(li.head_names().values()) == {"head"}

    def test_ls_carries_one_extra_head(self):
        ls = ArchitectureConfig.from_preset("smoke", 10, 13, "LS")
        li = ArchitectureConfig.from_preset("smoke", 10, 13, "LI")
        head = sum(spec.param_count() for spec in li.head_layers("head"))
        assert ls.parameter_count() - li.parameter_count() == head

    def test_trunk_chain(self):
        arch = ArchitectureConfig.from_preset("smoke", 10, 13)
        trunk = arch.trunk_layers()
        assert [spec.name for spec in trunk] == ["trunk.proj", "trunk.proj_relu", "trunk.blstm1", "trunk.blstm2"]
        assert trunk[-1].out_dim == 16


class TestBudgetMatching:
    @pytest.mark.parametrize("preset, input_dim, output_dim", [("smoke", 12, 19), ("toy", 61, 43)])
    def test_matched_li_within_tolerance(self, preset, input_dim, output_dim):
        ls = ArchitectureConfig.from_preset(preset, input_dim, output_dim, "LS")
        matched = match_parameter_budget(ls)
        assert matched.variant == "LI"
        assert matched.head_width == ls.head_width
        gap = abs(matched.parameter_count() - ls.parameter_count())
        assert gap <= BUDGET_TOLERANCE * ls.parameter_count()

    def test_matched_trunk_is_wider(self):
        ls = ArchitectureConfig.from_preset("toy", 61, 43, "LS")
        matched = match_parameter_budget(ls)
        assert (matched.blstm_width, matched.projection_width) > (ls.blstm_width, ls.projection_width)


class TestTrainingConfig:
    def test_defaults(self):
        config = TrainingConfig()
        assert (config.learning_rate, config.momentum, config.batch_sequences) == (0.002, 0.9, 25)
        assert config.clip_norm == 5.0

    @pytest.mark.parametrize("overrides", [{"momentum": 1.0}, {"learning_rate": 0.0}, {"epochs": 3}])
    def test_invalid(self, overrides):
        with pytest.raises(ValidationError):
            TrainingConfig(**overrides)
