"""
Shared language-independent trunk with language-selected output heads.

    Y = L_lang(S(X))   (LS: one head per language)
    Y = L(S(X))        (LI: one head shared by both languages)
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ..data_collection.world_model import stream_rng
from ..exceptions import DimensionMismatchError
from ..feature_store.feature_definitions import InputFrameSequence, LanguageId
from ..model_development.layers import LayerSpec, Tape, backward, forward, init_params
from ..model_development.model_configuration import ArchitectureConfig
from ..model_development.param_store import ParamStore

logger = structlog.get_logger(__name__)

INIT_STREAM = 10


@dataclass
class NetworkTape:
    trunk: Tape
    head: Tape
    head_name: str


def _as_language(lang: Union[LanguageId, str]) -> LanguageId:
    try:
        return LanguageId(lang)
    except ValueError:
        raise ValueError(f"unknown language {lang!r}") from None


class ModularizedNetwork:
    """Topology plus parameters of the trunk and heads of one architecture."""

    def __init__(self, arch: ArchitectureConfig, params: Optional[ParamStore] = None, seed: int = 0):
        """
        Args:
            arch (ArchitectureConfig): Topology
            params (ParamStore, optional): Existing parameters (e.g. from a
                checkpoint); freshly initialized from `seed` when omitted
            seed (int): Initialization seed
        """
        self.arch = arch
        self.trunk_layers: List[LayerSpec] = arch.trunk_layers()
        self.head_by_language: Dict[LanguageId, str] = arch.head_names()
        self.heads: Dict[str, List[LayerSpec]] = {
            head: arch.head_layers(head) for head in sorted(set(self.head_by_language.values()))
        }
        if params is None:
            params = self._initialize(seed)
        self.params = params
        self._check_params()

    def _initialize(self, seed: int) -> ParamStore:
        params = ParamStore()
        rng = stream_rng(seed, INIT_STREAM)
        init_params(self.trunk_layers, params, rng)
        for layers in self.heads.values():
            init_params(layers, params, rng)
            # untrained heads predict zero, i.e. the training mean after de-standardization
            output = layers[-1]
            params.value(f"{output.name}.W").fill(0.0)
            params.value(f"{output.name}.b").fill(0.0)
        return params

    def _check_params(self) -> None:
        for spec in self.all_layers():
            for name in spec.param_names():
                if name not in self.params:
                    raise DimensionMismatchError(f"parameter {name} missing for architecture {self.arch.variant}")

    def all_layers(self) -> List[LayerSpec]:
        return self.trunk_layers + [spec for layers in self.heads.values() for spec in layers]

    def head_for(self, lang: Union[LanguageId, str]) -> str:
        return self.head_by_language[_as_language(lang)]

    def layers_for(self, lang: Union[LanguageId, str]) -> List[LayerSpec]:
        """The full chain (trunk then head) used for one language."""
        return self.trunk_layers + self.heads[self.head_for(lang)]

    def forward(
        self,
        inputs: np.ndarray,
        lang: Union[LanguageId, str],
        lengths: Optional[Sequence[int]] = None,
        params: Optional[ParamStore] = None,
    ) -> Tuple[np.ndarray, NetworkTape]:
        """
        Run the trunk once and route its output through the language's head.

        Args:
            inputs (np.ndarray): T x input_dim or B x T x input_dim
            lang (LanguageId): Language switch
            lengths (Sequence[int], optional): Valid frames per sequence
            params (ParamStore, optional): Alternate store sharing the
                topology (defaults to the network's own)

        Returns:
            Tuple of raw regression outputs and the tape for backward
        """
        head = self.head_for(lang)
        params = self.params if params is None else params
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape[-1] != self.arch.input_dim:
            raise DimensionMismatchError(f"input width {inputs.shape[-1]} != architecture input {self.arch.input_dim}")
        hidden, trunk_tape = forward(self.trunk_layers, params, inputs, lengths)
        output, head_tape = forward(self.heads[head], params, hidden, lengths)
        return output, NetworkTape(trunk=trunk_tape, head=head_tape, head_name=head)

    def backward(self, tape: NetworkTape, output_gradient: np.ndarray, grads: Optional[ParamStore] = None) -> np.ndarray:
        """Accumulate gradients of the trunk and the active head only."""
        d_hidden = backward(tape.head, output_gradient, grads)
        return backward(tape.trunk, d_hidden, grads)

    def parameter_counts(self) -> Dict[str, int]:
        counts = {"trunk": sum(spec.param_count() for spec in self.trunk_layers)}
        for head, layers in self.heads.items():
            counts[head] = sum(spec.param_count() for spec in layers)
        counts["total"] = sum(counts.values())
        return counts


def model_forward(
    arch: ArchitectureConfig,
    params: ParamStore,
    x: Union[InputFrameSequence, np.ndarray],
    lang: Union[LanguageId, str],
) -> np.ndarray:
    """
    Predict acoustic rows for one utterance.

    Args:
        arch (ArchitectureConfig): Topology
        params (ParamStore): Parameters matching `arch`
        x (InputFrameSequence | np.ndarray): T x input_dim rows
        lang (LanguageId): Selects the head (LS) or is ignored beyond validation (LI)

    Returns:
        T x output_dim raw regression values
    """
    rows = x.rows if isinstance(x, InputFrameSequence) else np.asarray(x, dtype=np.float64)
    if rows.ndim != 2:
        raise DimensionMismatchError(f"expected T x {arch.input_dim} rows, got {rows.shape}")
    output, _ = ModularizedNetwork(arch, params=params).forward(rows, lang)
    return output
