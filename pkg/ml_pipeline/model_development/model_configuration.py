"""
Architecture and training hyperparameters of the modular network.

Trunk: linear projection + ReLU, then two BLSTM layers (width given per
direction). Head: linear + ReLU, then a linear layer to the acoustic width.
The LS variant carries one head per language, the LI variant a single head.
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..feature_store.feature_definitions import LanguageId
from .layers import LayerKind, LayerSpec

ARCHITECTURE_PRESETS: Dict[str, Dict[str, int]] = {
    "toy": {"projection_width": 32, "blstm_width": 32, "head_width": 16},
    "paper": {"projection_width": 256, "blstm_width": 256, "head_width": 128},
    "smoke": {"projection_width": 8, "blstm_width": 8, "head_width": 8},
}

BUDGET_TOLERANCE = 0.02


class ArchitectureConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Literal["LI", "LS"] = "LS"
    input_dim: int = Field(..., ge=1)
    output_dim: int = Field(..., ge=10)
    projection_width: int = Field(32, ge=1)
    blstm_width: int = Field(32, ge=1)
    blstm_layers: int = Field(2, ge=1)
    head_width: int = Field(16, ge=1)

    @classmethod
    def from_preset(cls, preset: str, input_dim: int, output_dim: int, variant: str = "LS") -> "ArchitectureConfig":
        if preset not in ARCHITECTURE_PRESETS:
            raise ValueError(f"unknown architecture preset {preset!r}, expected one of {sorted(ARCHITECTURE_PRESETS)}")
        return cls(variant=variant.upper(), input_dim=input_dim, output_dim=output_dim, **ARCHITECTURE_PRESETS[preset])

    def head_names(self) -> Dict[LanguageId, str]:
        """Language -> head parameter prefix; both languages share 'head' in LI."""
        if self.variant == "LS":
            return {language: f"head_{language.value}" for language in LanguageId}
        return {language: "head" for language in LanguageId}

    def trunk_layers(self) -> List[LayerSpec]:
        layers = [
            LayerSpec(LayerKind.LINEAR, self.input_dim, self.projection_width, "trunk.proj"),
            LayerSpec(LayerKind.RELU, self.projection_width, self.projection_width, "trunk.proj_relu"),
        ]
        width = self.projection_width
        for index in range(1, self.blstm_layers + 1):
            layers.append(LayerSpec(LayerKind.BLSTM, width, 2 * self.blstm_width, f"trunk.blstm{index}"))
            width = 2 * self.blstm_width
        return layers

    def head_layers(self, head: str) -> List[LayerSpec]:
        return [
            LayerSpec(LayerKind.LINEAR, 2 * self.blstm_width, self.head_width, f"{head}.hidden"),
            LayerSpec(LayerKind.RELU, self.head_width, self.head_width, f"{head}.hidden_relu"),
            LayerSpec(LayerKind.LINEAR, self.head_width, self.output_dim, f"{head}.out"),
        ]

    def parameter_count(self) -> int:
        heads = sorted(set(self.head_names().values()))
        layers = self.trunk_layers() + [spec for head in heads for spec in self.head_layers(head)]
        return sum(spec.param_count() for spec in layers)


class TrainingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(0.002, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    batch_sequences: int = Field(25, ge=1)
    max_epochs: int = Field(200, ge=0)
    patience: int = Field(10, ge=1)
    clip_norm: Optional[float] = Field(5.0, gt=0.0)
    workers: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)


def match_parameter_budget(ls_arch: ArchitectureConfig, tolerance: float = BUDGET_TOLERANCE) -> ArchitectureConfig:
    """
    Widen the trunk of a single-head architecture until its parameter count
    matches `ls_arch` within `tolerance` (relative).

    Args:
        ls_arch (ArchitectureConfig): Language-specific reference architecture
        tolerance (float): Allowed relative deviation of the parameter count

    Returns:
        LI ArchitectureConfig with the same head width and a wider trunk

    Raises:
        ValueError: If no trunk width within twice the reference meets the budget
    """
    target = ls_arch.parameter_count()
    base = ls_arch.model_copy(update={"variant": "LI"})
    best, best_gap = base, abs(base.parameter_count() - target)
    for blstm_width in range(ls_arch.blstm_width, 2 * ls_arch.blstm_width + 1):
        for projection_width in range(ls_arch.projection_width, 2 * ls_arch.projection_width + 1):
            candidate = base.model_copy(update={"blstm_width": blstm_width, "projection_width": projection_width})
            gap = abs(candidate.parameter_count() - target)
            if gap < best_gap:
                best, best_gap = candidate, gap
            if candidate.parameter_count() > target:
                break
    if best_gap > tolerance * target:
        raise ValueError(f"no LI trunk within {tolerance:.0%} of {target} parameters")
    return best
