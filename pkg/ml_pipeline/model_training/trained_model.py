"""
A trained modular network together with everything conversion needs:
standardization statistics, the posteriorgram regime it was trained on,
the speaker-embedding table and per-speaker F0 statistics.
"""
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import CheckpointError
from ..feature_store.feature_definitions import LanguageId, PosteriorgramKind, SpeakerEmbedding
from ..model_deployment.f0_conversion import F0Stats
from ..model_development.checkpoint import file_digest, load_checkpoint, save_checkpoint
from ..model_development.model_configuration import ArchitectureConfig, TrainingConfig
from ..model_development.optimizer import MomentumOptimizer
from ..model_development.param_store import ParamStore
from ..preprocessing.feature_scaling import Standardizer
from .modularized_network import ModularizedNetwork

CHECKPOINT_FORMAT = "xlvc-modnet"
STANDARDIZER_PREFIX = "standardizer/"
VELOCITY_PREFIX = "velocity/"


def config_hash(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class TrainedModel:
    network: ModularizedNetwork
    input_scaler: Standardizer
    output_scaler: Standardizer
    regime: PosteriorgramKind
    embeddings: Dict[str, SpeakerEmbedding]
    speaker_languages: Dict[str, LanguageId]
    f0_stats: Dict[str, F0Stats]
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seed: int = 0
    history: List[Dict[str, Any]] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    corpus_digest: str = ""
    digest: str = ""

    @property
    def arch(self) -> ArchitectureConfig:
        return self.network.arch

    @property
    def config_hash(self) -> str:
        return config_hash({
            "architecture": self.arch.model_dump(),
            "training": self.training.model_dump(exclude={"max_epochs"}),
            "regime": self.regime.regime_name,
            "corpus": self.corpus_digest,
        })

    def predict(self, raw_inputs: np.ndarray, lang: LanguageId) -> np.ndarray:
        """De-standardized network output for one utterance of raw input rows."""
        output, _ = self.network.forward(self.input_scaler.transform(raw_inputs), lang)
        return self.output_scaler.inverse_transform(output)

    def embedding(self, speaker_id: str) -> SpeakerEmbedding:
        try:
            return self.embeddings[speaker_id]
        except KeyError:
            raise CheckpointError(f"speaker {speaker_id} has no embedding in this checkpoint") from None

    def speaker_f0(self, speaker_id: str) -> F0Stats:
        try:
            return self.f0_stats[speaker_id]
        except KeyError:
            raise CheckpointError(f"speaker {speaker_id} has no F0 statistics in this checkpoint") from None

    def save(self, path: Path, optimizer: Optional[MomentumOptimizer] = None) -> Path:
        params = self.network.params
        tensors: Dict[str, np.ndarray] = dict(params.items())
        if optimizer is not None:
            tensors.update(optimizer.state_tensors(params))
        tensors[f"{STANDARDIZER_PREFIX}input_mean"] = self.input_scaler.mean
        tensors[f"{STANDARDIZER_PREFIX}input_variance"] = self.input_scaler.variance
        tensors[f"{STANDARDIZER_PREFIX}output_mean"] = self.output_scaler.mean
        tensors[f"{STANDARDIZER_PREFIX}output_variance"] = self.output_scaler.variance
        for speaker_id, embedding in self.embeddings.items():
            tensors[f"embedding/{speaker_id}"] = embedding.values

        metadata = {
            "format": CHECKPOINT_FORMAT,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "corpus_digest": self.corpus_digest,
            "architecture": self.arch.model_dump(),
            "training": self.training.model_dump(),
            "regime": self.regime.regime_name,
            "heads": {language.value: head for language, head in self.network.head_by_language.items()},
            "parameters": params.names(),
            "speaker_languages": {spk: lang.value for spk, lang in self.speaker_languages.items()},
            "f0_stats": {spk: stats.to_dict() for spk, stats in self.f0_stats.items()},
            "history": self.history,
            "extra": self.extra,
        }
        written = save_checkpoint(path, tensors, metadata)
        self.digest = file_digest(written)
        return written

    @classmethod
    def load(cls, path: Path, optimizer: Optional[MomentumOptimizer] = None) -> "TrainedModel":
        """
        Restore a model (and optionally optimizer velocity) from a checkpoint.

        Raises:
            CheckpointError: If the file is not a modular-network checkpoint
        """
        checkpoint = load_checkpoint(path)
        meta = checkpoint.metadata
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path}: not a modular-network checkpoint")
        try:
            arch = ArchitectureConfig(**meta["architecture"])
            tensors = checkpoint.tensors
            params = ParamStore()
            for name in meta["parameters"]:
                params.add(name, tensors[name])
            network = ModularizedNetwork(arch, params=params)
            if optimizer is not None:
                optimizer.load_state_tensors(params, tensors)

            embeddings = {
                name[len("embedding/"):]: SpeakerEmbedding(name[len("embedding/"):], values)
                for name, values in tensors.items()
                if name.startswith("embedding/")
            }
            model = cls(
                network=network,
                input_scaler=Standardizer(
                    tensors[f"{STANDARDIZER_PREFIX}input_mean"], tensors[f"{STANDARDIZER_PREFIX}input_variance"]
                ),
                output_scaler=Standardizer(
                    tensors[f"{STANDARDIZER_PREFIX}output_mean"], tensors[f"{STANDARDIZER_PREFIX}output_variance"]
                ),
                regime=PosteriorgramKind.from_regime(meta["regime"]),
                embeddings=embeddings,
                speaker_languages={spk: LanguageId(lang) for spk, lang in meta["speaker_languages"].items()},
                f0_stats={spk: F0Stats.from_dict(stats) for spk, stats in meta["f0_stats"].items()},
                training=TrainingConfig(**meta["training"]),
                seed=int(meta["seed"]),
                history=list(meta.get("history", [])),
                extra=dict(meta.get("extra", {})),
                corpus_digest=str(meta.get("corpus_digest", "")),
            )
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"{path}: incomplete checkpoint ({e})") from e
        model.digest = file_digest(path)
        return model
