from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed

from ..data_collection.corpus_generator import load_corpus_config
from ..data_collection.speaker_embedding import embedding_table
from ..exceptions import ManifestError, NonFiniteError, RegimeMismatchError, TrainingDivergenceError
from ..feature_store.feature_definitions import LanguageId, PosteriorgramKind, SpeakerEmbedding
from ..feature_store.feature_io import read_acoustic, read_feature_file
from ..feature_store.manifest import CorpusManifest
from ..model_deployment.f0_conversion import F0Stats
from ..model_development.model_configuration import ArchitectureConfig, TrainingConfig
from ..model_development.optimizer import MomentumOptimizer
from ..model_development.param_store import ParamStore
from ..preprocessing.data_validator import DataValidator
from ..preprocessing.feature_scaling import Standardizer
from .batch_scheduler import language_batch_scheduler
from .modularized_network import ModularizedNetwork
from .trained_model import TrainedModel

HISTORY_FILE = "history.tsv"
BEST_CHECKPOINT = "best.xvck"
LAST_CHECKPOINT = "last.xvck"


@dataclass(frozen=True)
class UtteranceData:
    utterance_id: str
    language: LanguageId
    inputs: np.ndarray
    targets: np.ndarray

    @property
    def num_frames(self) -> int:
        return int(self.inputs.shape[0])


@dataclass
class TrainState:
    """Mutable training state; a checkpoint of it resumes training bit-exactly."""

    model: TrainedModel
    optimizer: MomentumOptimizer
    epoch: int = 0
    best_mean_valid: float = float("inf")
    best_valid_mse: Dict[str, float] = field(default_factory=dict)
    epochs_without_improvement: int = 0
    best_params: Dict[str, np.ndarray] = field(default_factory=dict)
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def params(self) -> ParamStore:
        return self.model.network.params

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=HISTORY_COLUMNS)


HISTORY_COLUMNS = ["epoch", "train_mse_A", "train_mse_B", "valid_mse_A", "valid_mse_B", "valid_mse_mean"]


def pad_batch(items: Sequence[UtteranceData]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack utterances into B x T_max arrays padded with zeros, plus lengths."""
    lengths = np.array([item.num_frames for item in items], dtype=np.int64)
    steps = int(lengths.max())
    inputs = np.zeros((len(items), steps, items[0].inputs.shape[1]))
    targets = np.zeros((len(items), steps, items[0].targets.shape[1]))
    for row, item in enumerate(items):
        inputs[row, :item.num_frames] = item.inputs
        targets[row, :item.num_frames] = item.targets
    return inputs, targets, lengths


def frame_mask(lengths: np.ndarray, steps: int) -> np.ndarray:
    return (np.arange(steps)[np.newaxis, :] < lengths[:, np.newaxis])[:, :, np.newaxis]


class ModularTrainer:
    """
    Joint training of the trunk and heads with language-ID switching.

    Every minibatch holds utterances of one language; only the trunk and
    that language's head receive gradient.
    """

    def __init__(self, arch: ArchitectureConfig, training: TrainingConfig):
        """
        Args:
            arch (ArchitectureConfig): Network topology
            training (TrainingConfig): Optimization hyperparameters and seed
        """
        self.arch = arch
        self.training = training
        self.logger = structlog.get_logger(self.__class__.__name__)

    # -- data ------------------------------------------------------------

    def load_utterances(
        self,
        manifest: CorpusManifest,
        embeddings: Dict[str, SpeakerEmbedding],
    ) -> Tuple[Dict[str, UtteranceData], PosteriorgramKind]:
        """Read raw (unstandardized) inputs and targets of every record."""
        data: Dict[str, UtteranceData] = {}
        regimes = set()
        for record in manifest:
            if not record.ppg_path:
                raise ManifestError(f"{record.utterance_id} has no posteriorgram; run PPG extraction first")
            kind_code, ppg = read_feature_file(manifest.resolve(record.ppg_path))
            regimes.add(PosteriorgramKind.from_feature_kind(kind_code))
            acoustic = read_acoustic(manifest.resolve(record.acoustic_path))
            if ppg.shape[0] != acoustic.num_frames:
                raise ManifestError(f"{record.utterance_id}: PPG has {ppg.shape[0]} frames, acoustic {acoustic.num_frames}")
            spk = embeddings[record.speaker_id].values
            inputs = np.hstack([ppg, np.broadcast_to(spk, (ppg.shape[0], spk.shape[0]))])
            data[record.utterance_id] = UtteranceData(record.utterance_id, record.language, inputs, acoustic.frames)
        if len(regimes) != 1:
            raise RegimeMismatchError(f"manifest mixes posteriorgram regimes {sorted(r.value for r in regimes)}")
        return data, regimes.pop()

    @staticmethod
    def speaker_f0_stats(manifest: CorpusManifest) -> Dict[str, F0Stats]:
        stats: Dict[str, F0Stats] = {}
        for speaker_id in manifest.speakers():
            log_f0, vuv = [], []
            for record in manifest.by_speaker(speaker_id):
                acoustic = read_acoustic(manifest.resolve(record.acoustic_path))
                log_f0.append(acoustic.log_f0)
                vuv.append(acoustic.vuv)
            stats[speaker_id] = F0Stats.from_frames(np.concatenate(log_f0), np.concatenate(vuv))
        return stats

    # -- optimization ------------------------------------------------------

    def batch_gradients(
        self,
        network: ModularizedNetwork,
        items: Sequence[UtteranceData],
        language: LanguageId,
        normalizer: float,
        grads: ParamStore,
    ) -> float:
        """
        Accumulate masked-MSE gradients of one homogeneous batch into `grads`.

        Returns:
            Sum of squared errors over the valid frames
        """
        inputs, targets, lengths = pad_batch(items)
        output, tape = network.forward(inputs, language, lengths)
        mask = frame_mask(lengths, inputs.shape[1])
        residual = np.where(mask, output - targets, 0.0)
        network.backward(tape, 2.0 * residual / normalizer, grads)
        return float(np.sum(residual * residual))

    def _batch_step(
        self,
        state: TrainState,
        items: Sequence[UtteranceData],
        language: LanguageId,
        batch_id: str,
    ) -> Tuple[float, int]:
        network = state.model.network
        frames = sum(item.num_frames for item in items)
        normalizer = float(frames * self.arch.output_dim)
        workers = min(self.training.workers, len(items))

        try:
            if workers == 1:
                squared = self.batch_gradients(network, items, language, normalizer, state.params)
            else:
                chunks = [list(items[i::workers]) for i in range(workers)]
                shadows = [state.params.grad_shadow() for _ in chunks]
                partials = Parallel(n_jobs=workers, prefer="threads")(
                    delayed(self.batch_gradients)(network, chunk, language, normalizer, shadow)
                    for chunk, shadow in zip(chunks, shadows)
                )
                # fixed-order reduction
                for shadow in shadows:
                    state.params.accumulate_grads(shadow)
                squared = float(sum(partials))

            loss = squared / normalizer
            if not np.isfinite(loss):
                raise NonFiniteError(f"loss {loss}")
            state.optimizer.step(state.params)
        except NonFiniteError as e:
            state.params.zero_grad()
            self.logger.error("training_diverged", batch_id=batch_id, error=str(e))
            raise TrainingDivergenceError(batch_id, float("nan")) from e
        return squared, frames

    def validation_mse(
        self,
        network: ModularizedNetwork,
        data: Sequence[UtteranceData],
    ) -> Dict[LanguageId, float]:
        """Mean squared error in standardized units per language."""
        result: Dict[LanguageId, float] = {}
        for language in LanguageId:
            items = [item for item in data if item.language is language]
            if not items:
                continue
            squared, count = 0.0, 0
            batch = self.training.batch_sequences
            for start in range(0, len(items), batch):
                chunk = items[start:start + batch]
                inputs, targets, lengths = pad_batch(chunk)
                output, _ = network.forward(inputs, language, lengths)
                residual = np.where(frame_mask(lengths, inputs.shape[1]), output - targets, 0.0)
                squared += float(np.sum(residual * residual))
                count += int(lengths.sum()) * self.arch.output_dim
            result[language] = squared / count
        return result

    # -- driver ------------------------------------------------------------

    def initial_state(
        self,
        manifest: CorpusManifest,
        embeddings: Dict[str, SpeakerEmbedding],
        train_data: Sequence[UtteranceData],
        regime: PosteriorgramKind,
    ) -> TrainState:
        input_scaler = Standardizer.fit(item.inputs for item in train_data)
        output_scaler = Standardizer.fit(item.targets for item in train_data)
        network = ModularizedNetwork(self.arch, seed=self.training.seed)
        train_manifest = manifest.by_split("train")
        model = TrainedModel(
            network=network,
            input_scaler=input_scaler,
            output_scaler=output_scaler,
            regime=regime,
            embeddings=dict(embeddings),
            speaker_languages={r.speaker_id: r.language for r in manifest},
            f0_stats=self.speaker_f0_stats(train_manifest),
            training=self.training,
            seed=self.training.seed,
            corpus_digest=manifest.by_split("train", "valid").digest(),
        )
        optimizer = MomentumOptimizer(self.training.learning_rate, self.training.momentum, self.training.clip_norm)
        return TrainState(model=model, optimizer=optimizer, best_params=network.params.snapshot())

    def train(
        self,
        manifest: CorpusManifest,
        embeddings: Dict[str, SpeakerEmbedding],
        out_dir: Optional[Path] = None,
        resume: bool = False,
    ) -> TrainState:
        """
        Train until `max_epochs` or early stopping.

        Args:
            manifest (CorpusManifest): Regime manifest with train and valid splits
            embeddings (Dict[str, SpeakerEmbedding]): Embedding per speaker
            out_dir (Path, optional): Receives best.xvck, last.xvck and history.tsv
            resume (bool): Continue from out_dir/last.xvck when it exists

        Returns:
            Final TrainState (the best parameters are kept in `best_params`)

        Raises:
            TrainingDivergenceError: On a non-finite batch loss
        """
        train_manifest = manifest.by_split("train")
        valid_manifest = manifest.by_split("valid")
        for language in LanguageId:
            if len(train_manifest.by_language(language)) == 0:
                raise ManifestError(f"no training utterances for language {language.value}")
        if len(valid_manifest) == 0:
            raise ManifestError("manifest has no validation split")

        try:
            data, regime = self.load_utterances(manifest.by_split("train", "valid"), embeddings)
            train_data = [data[r.utterance_id] for r in train_manifest]
            state = self.initial_state(manifest, embeddings, train_data, regime)
            if resume and out_dir is not None and (Path(out_dir) / LAST_CHECKPOINT).exists():
                state = self.resume_state(Path(out_dir), state)

            model = state.model
            scaled = {
                uid: UtteranceData(
                    uid, item.language, model.input_scaler.transform(item.inputs),
                    model.output_scaler.transform(item.targets),
                )
                for uid, item in data.items()
            }
            valid_data = [scaled[r.utterance_id] for r in valid_manifest]
            if out_dir is not None and state.epoch == 0:
                self._persist(state, Path(out_dir))

            while state.epoch < self.training.max_epochs:
                if state.epochs_without_improvement >= self.training.patience:
                    break
                self._run_epoch(state, train_manifest, scaled, valid_data)
                if out_dir is not None:
                    self._persist(state, Path(out_dir))
        except TrainingDivergenceError:
            raise
        except Exception as e:
            self.logger.error("training_failed", variant=self.arch.variant, error=str(e))
            raise

        self.logger.info(
            "training_finished",
            variant=self.arch.variant,
            regime=state.model.regime.regime_name,
            epochs=state.epoch,
            best_valid_mse=state.best_valid_mse,
        )
        return state

    def _run_epoch(
        self,
        state: TrainState,
        train_manifest: CorpusManifest,
        scaled: Dict[str, UtteranceData],
        valid_data: List[UtteranceData],
    ) -> None:
        epoch = state.epoch + 1
        schedule = language_batch_scheduler(train_manifest, self.training.batch_sequences, self.training.seed, epoch)
        squared = {language: 0.0 for language in LanguageId}
        counts = {language: 0 for language in LanguageId}
        for index, (language, utterance_ids) in enumerate(schedule):
            items = [scaled[uid] for uid in utterance_ids]
            batch_squared, frames = self._batch_step(state, items, language, f"{epoch}:{index}:{language.value}")
            squared[language] += batch_squared
            counts[language] += frames * self.arch.output_dim

        valid = self.validation_mse(state.model.network, valid_data)
        mean_valid = float(np.mean(list(valid.values())))
        row = {"epoch": float(epoch), "valid_mse_mean": mean_valid}
        for language in LanguageId:
            row[f"train_mse_{language.value}"] = squared[language] / counts[language] if counts[language] else float("nan")
            row[f"valid_mse_{language.value}"] = valid.get(language, float("nan"))
        state.history.append(row)
        state.epoch = epoch

        if mean_valid < state.best_mean_valid:
            state.best_mean_valid = mean_valid
            state.best_valid_mse = {language.value: mse for language, mse in valid.items()}
            state.best_params = state.params.snapshot()
            state.epochs_without_improvement = 0
        else:
            state.epochs_without_improvement += 1

        self.logger.info(
            "epoch_finished",
            epoch=epoch,
            batches=len(schedule),
            train_mse_A=row["train_mse_A"],
            train_mse_B=row["train_mse_B"],
            valid_mse_mean=mean_valid,
            stale_epochs=state.epochs_without_improvement,
        )

    # -- persistence -------------------------------------------------------

    def _progress(self, state: TrainState) -> Dict[str, object]:
        return {
            "epoch": state.epoch,
            "best_mean_valid": state.best_mean_valid,
            "best_valid_mse": state.best_valid_mse,
            "epochs_without_improvement": state.epochs_without_improvement,
            "optimizer_steps": state.optimizer.steps,
        }

    def _persist(self, state: TrainState, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        model = state.model
        model.history = list(state.history)
        model.extra = self._progress(state)
        model.save(out_dir / LAST_CHECKPOINT, optimizer=state.optimizer)

        current = model.network.params.snapshot()
        model.network.params.load_snapshot(state.best_params)
        try:
            model.save(out_dir / BEST_CHECKPOINT)
        finally:
            model.network.params.load_snapshot(current)
        state.history_frame().to_csv(out_dir / HISTORY_FILE, sep="\t", index=False)

    def resume_state(self, out_dir: Path, fresh: TrainState) -> TrainState:
        """Restore parameters, velocity, progress and best parameters from out_dir."""
        optimizer = MomentumOptimizer(self.training.learning_rate, self.training.momentum, self.training.clip_norm)
        model = TrainedModel.load(out_dir / LAST_CHECKPOINT, optimizer=optimizer)
        if model.config_hash != fresh.model.config_hash:
            raise RegimeMismatchError(f"{out_dir / LAST_CHECKPOINT} was trained with a different configuration")
        progress = model.extra
        optimizer.steps = int(progress.get("optimizer_steps", 0))
        best = TrainedModel.load(out_dir / BEST_CHECKPOINT)
        state = TrainState(
            model=model,
            optimizer=optimizer,
            epoch=int(progress["epoch"]),
            best_mean_valid=float(progress["best_mean_valid"]),
            best_valid_mse={k: float(v) for k, v in dict(progress["best_valid_mse"]).items()},
            epochs_without_improvement=int(progress["epochs_without_improvement"]),
            best_params=best.network.params.snapshot(),
            history=[dict(row) for row in model.history],
        )
        model.training = self.training
        self.logger.info("training_resumed", epoch=state.epoch, out_dir=str(out_dir))
        return state


def train(
    arch: ArchitectureConfig,
    manifest: CorpusManifest,
    training: TrainingConfig,
    embeddings: Optional[Dict[str, SpeakerEmbedding]] = None,
    out_dir: Optional[Path] = None,
    resume: bool = False,
) -> TrainState:
    """
    Train a modular network on a regime manifest.

    Args:
        arch (ArchitectureConfig): LI or LS topology
        manifest (CorpusManifest): Manifest whose records carry PPG paths
        training (TrainingConfig): Hyperparameters and seed
        embeddings (Dict[str, SpeakerEmbedding], optional): Defaults to the
            corpus' own embedding provider settings
        out_dir (Path, optional): Output directory for checkpoints and history
        resume (bool): Continue an interrupted run in out_dir

    Returns:
        TrainState after the last epoch

    Raises:
        ManifestError: If a train or valid record has a missing, unreadable or
            inconsistent feature file, or a posteriorgram breaks its row sums
    """
    corpus = load_corpus_config(manifest.root)
    problems = DataValidator(corpus.dim_a).validate_corpus(manifest.by_split("train", "valid"))
    if not problems.empty:
        first = problems.iloc[0]
        raise ManifestError(
            f"{len(problems)} corpus problems in {manifest.root}, first {first.utterance_id}: {first.problem}"
        )
    if embeddings is None:
        embeddings = embedding_table(
            manifest.speakers(), corpus.embedding_mode, corpus.speaker_dim, corpus.seed, manifest
        )
    return ModularTrainer(arch, training).train(manifest, embeddings, out_dir=out_dir, resume=resume)


def best_model(state: TrainState) -> TrainedModel:
    """A TrainedModel carrying the best parameters of a finished run."""
    params = state.params.copy()
    params.load_snapshot(state.best_params)
    model = state.model
    return TrainedModel(
        network=ModularizedNetwork(model.arch, params=params),
        input_scaler=model.input_scaler,
        output_scaler=model.output_scaler,
        regime=model.regime,
        embeddings=model.embeddings,
        speaker_languages=model.speaker_languages,
        f0_stats=model.f0_stats,
        training=model.training,
        seed=model.seed,
        history=list(state.history),
        extra={"best_valid_mse": state.best_valid_mse},
        corpus_digest=model.corpus_digest,
    )
