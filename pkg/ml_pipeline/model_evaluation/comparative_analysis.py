"""
Four-system comparison harness: bPPG-LI, mPPG-LI, bPPG-LS, mPPG-LS trained
on one synthetic corpus per seed and evaluated in both directions.

Layout under the experiment root:

    seed_<s>/corpus/...                      generated corpus and PPGs
    seed_<s>/<system>/best.xvck              trained checkpoint
    seed_<s>/<system>/evaluation_A2B.tsv     per-utterance MCD tables
    seed_<s>/<system>/cell.json              status, validation MSE, sizes
    report.tsv, summary.tsv, sign_tests.tsv, summary.txt
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed
from scipy.stats import binomtest

from ..data_collection.corpus_config import GenerativeConfig
from ..data_collection.corpus_generator import MANIFEST_FILE, TEST_MANIFEST_FILE, CorpusGenerator
from ..data_collection.phone_recognizer import extract_corpus_ppgs
from ..exceptions import TrainingDivergenceError, UsageError, XlvcError
from ..feature_store.feature_definitions import PosteriorgramKind
from ..feature_store.manifest import CorpusManifest
from ..model_deployment.voice_converter import GenerationSettings
from ..model_development.model_configuration import ArchitectureConfig, TrainingConfig, match_parameter_budget
from ..model_training.train_pipeline import BEST_CHECKPOINT, train
from ..model_training.trained_model import TrainedModel
from .performance_metrics import McdConfig
from .system_evaluation import Direction, evaluate_system

logger = structlog.get_logger(__name__)

REGIMES = (PosteriorgramKind.BILINGUAL_STACKED, PosteriorgramKind.MIXED_LINGUAL)
DIRECTIONS = (Direction.parse("A->B"), Direction.parse("B->A"))
SYSTEMS = ("bPPG-LI", "mPPG-LI", "bPPG-LS", "mPPG-LS")
CELL_FILE = "cell.json"
MIN_SEEDS = 3

# (better, worse): the first system is expected to reach the lower MCD
CLAIMS = (
    ("bPPG-LS", "bPPG-LI"),
    ("mPPG-LS", "mPPG-LI"),
    ("mPPG-LS", "bPPG-LS"),
)


def system_name(regime: PosteriorgramKind, variant: str, budget_matched: bool = False) -> str:
    prefix = "bPPG" if regime is PosteriorgramKind.BILINGUAL_STACKED else "mPPG"
    return f"{prefix}-{variant}{'-matched' if budget_matched else ''}"


@dataclass(frozen=True)
class CellSpec:
    seed: int
    regime: PosteriorgramKind
    arch: ArchitectureConfig
    budget_matched: bool = False

    @property
    def system(self) -> str:
        return system_name(self.regime, self.arch.variant, self.budget_matched)


@dataclass
class ExperimentReport:
    seeds: List[int]
    cells: pd.DataFrame
    summary: pd.DataFrame
    sign_tests: pd.DataFrame
    files: Dict[str, Path] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"Cross-lingual conversion comparison over seeds {self.seeds}", ""]
        lines.append(f"{'system':<20}{'direction':<10}{'MCD mean':>10}{'std':>8}{'valid':>7}{'val MSE':>10}{'F0 RMSE':>9}{'params':>9}")
        for row in self.summary.itertuples(index=False):
            lines.append(
                f"{row.system:<20}{row.direction:<10}{row.mcd_mean:>10.3f}{row.mcd_std:>8.3f}"
                f"{row.valid_cells:>7d}{row.valid_mse_mean:>10.4f}{row.f0_rmse:>9.4f}{int(row.parameters):>9d}"
            )
        lines.append("")
        lines.append("Source analog bar (unconverted source vs target rendering, not a reproduction):")
        for direction, value in self.source_bar().items():
            lines.append(f"  {direction}: {value:.3f} dB")
        lines.append("")
        lines.append("Sign tests over seeds (direction-averaged MCD):")
        for row in self.sign_tests.itertuples(index=False):
            lines.append(
                f"  {row.better} < {row.worse}: {row.wins}/{row.seeds} seeds, "
                f"mean difference {row.mean_difference:+.3f} dB, p = {row.p_value:.4f}"
            )
        return "\n".join(lines) + "\n"

    def source_bar(self) -> Dict[str, float]:
        valid = self.cells[self.cells["status"] == "ok"]
        return {direction: float(group["source_mcd"].mean()) for direction, group in valid.groupby("direction")}

    def mean_mcd(self, system: str) -> float:
        """Seed- and direction-averaged MCD of one system."""
        valid = self.cells[(self.cells["system"] == system) & (self.cells["status"] == "ok")]
        return float(valid["mcd"].mean())

    def save(self, out_dir: Path) -> Dict[str, Path]:
        out_dir = Path(out_dir)
        self.files = {
            "report": out_dir / "report.tsv",
            "summary": out_dir / "summary.tsv",
            "sign_tests": out_dir / "sign_tests.tsv",
            "text": out_dir / "summary.txt",
        }
        self.cells.to_csv(self.files["report"], sep="\t", index=False)
        self.summary.to_csv(self.files["summary"], sep="\t", index=False)
        self.sign_tests.to_csv(self.files["sign_tests"], sep="\t", index=False)
        self.files["text"].write_text(self.to_text())
        return self.files


class ComparisonHarness:
    """Runs every (seed, system) cell and reduces them into an ExperimentReport."""

    def __init__(
        self,
        corpus: GenerativeConfig,
        training: TrainingConfig,
        arch_preset: str = "toy",
        budget_matched_li: bool = False,
        settings: Optional[GenerationSettings] = None,
        mcd_config: Optional[McdConfig] = None,
        n_jobs: int = 1,
    ):
        """
        Args:
            corpus (GenerativeConfig): Corpus template; its seed is replaced per run
            training (TrainingConfig): Hyperparameters; its seed is replaced per run
            arch_preset (str): Shared trunk/head sizes of all four systems
            budget_matched_li (bool): Also train LI with a widened trunk whose
                parameter count matches LS
            settings (GenerationSettings, optional): Conversion options
            mcd_config (McdConfig, optional): MCD coefficient range
            n_jobs (int): Cells trained concurrently
        """
        self.corpus = corpus
        self.training = training
        self.arch_preset = arch_preset
        self.budget_matched_li = budget_matched_li
        self.settings = settings or GenerationSettings()
        self.mcd_config = mcd_config or McdConfig()
        self.n_jobs = n_jobs
        self.logger = structlog.get_logger(self.__class__.__name__)

    def plan_cells(self, seed: int) -> List[CellSpec]:
        cells = []
        for regime in REGIMES:
            for variant in ("LI", "LS"):
                arch = ArchitectureConfig.from_preset(
                    self.arch_preset, self.corpus.input_dim(regime), self.corpus.acoustic_width, variant
                )
                cells.append(CellSpec(seed, regime, arch))
            if self.budget_matched_li:
                ls_arch = cells[-1].arch
                cells.append(CellSpec(seed, regime, match_parameter_budget(ls_arch), budget_matched=True))
        return cells

    def prepare_corpus(self, seed_dir: Path, seed: int) -> Dict[PosteriorgramKind, Tuple[CorpusManifest, CorpusManifest]]:
        generator = CorpusGenerator(self.corpus.model_copy(update={"seed": seed}), n_jobs=self.n_jobs)
        manifest, test_manifest = generator.generate(seed_dir / "corpus")
        regimes = {}
        for regime in REGIMES:
            train_manifest = extract_corpus_ppgs(manifest, regime, generator.world, MANIFEST_FILE, self.n_jobs)
            test_regime = extract_corpus_ppgs(test_manifest, regime, generator.world, TEST_MANIFEST_FILE, self.n_jobs)
            regimes[regime] = (train_manifest, test_regime)
        return regimes

    def run_cell(self, cell: CellSpec, cell_dir: Path, manifest: CorpusManifest,
                 test_manifest: CorpusManifest) -> Dict[str, Any]:
        summary: Dict[str, Any] = {
            "seed": cell.seed,
            "system": cell.system,
            "regime": cell.regime.regime_name,
            "variant": cell.arch.variant,
            "budget_matched": cell.budget_matched,
            "parameters": cell.arch.parameter_count(),
            "status": "ok",
            "error": "",
        }
        try:
            training = self.training.model_copy(update={"seed": cell.seed})
            state = train(cell.arch, manifest, training, out_dir=cell_dir)
            summary["epochs"] = state.epoch
            summary["valid_mse"] = state.best_mean_valid
            model = TrainedModel.load(cell_dir / BEST_CHECKPOINT)
            for direction in DIRECTIONS:
                evaluate_system(model, test_manifest, direction, cell_dir, self.settings, self.mcd_config)
        except (XlvcError, ValueError, OSError, np.linalg.LinAlgError) as e:
            # the cell is reported invalid and the run continues
            self.logger.error("cell_failed", seed=cell.seed, system=cell.system, error=str(e))
            summary["status"] = "diverged" if isinstance(e, TrainingDivergenceError) else "failed"
            summary["error"] = str(e)
        cell_dir.mkdir(parents=True, exist_ok=True)
        (cell_dir / CELL_FILE).write_text(json.dumps(summary, sort_keys=True, indent=2))
        return summary

    def run(self, seeds: Sequence[int], out_root: Path) -> ExperimentReport:
        if len(seeds) < MIN_SEEDS:
            raise UsageError(f"the comparison needs at least {MIN_SEEDS} seeds, got {len(seeds)}")
        out_root = Path(out_root)
        for seed in seeds:
            seed_dir = out_root / f"seed_{seed}"
            try:
                regimes = self.prepare_corpus(seed_dir, seed)
            except Exception as e:
                self.logger.error("corpus_preparation_failed", seed=seed, error=str(e))
                raise
            cells = self.plan_cells(seed)
            Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(self.run_cell)(cell, seed_dir / cell.system, *regimes[cell.regime]) for cell in cells
            )
            self.logger.info("seed_finished", seed=seed, cells=len(cells))
        report = assemble_report(out_root)
        report.save(out_root)
        return report


def run_comparison(
    corpus: GenerativeConfig,
    seeds: Sequence[int],
    training: TrainingConfig,
    out_root: Path,
    arch_preset: str = "toy",
    budget_matched_li: bool = False,
    settings: Optional[GenerationSettings] = None,
    mcd_config: Optional[McdConfig] = None,
    n_jobs: int = 1,
) -> ExperimentReport:
    """
    Run the four-system comparison over several seeds.

    Args:
        corpus (GenerativeConfig): Corpus parameters (seed replaced per run)
        seeds (Sequence[int]): At least three seeds
        training (TrainingConfig): Toy-scale hyperparameters
        out_root (Path): Experiment directory
        arch_preset (str): Architecture preset shared by all systems
        budget_matched_li (bool): Add parameter-matched LI cells
        settings (GenerationSettings, optional): Conversion options
        mcd_config (McdConfig, optional): MCD coefficient range
        n_jobs (int): Parallel workers

    Returns:
        ExperimentReport, also written under out_root
    """
    harness = ComparisonHarness(corpus, training, arch_preset, budget_matched_li, settings, mcd_config, n_jobs)
    return harness.run(list(seeds), out_root)


def _cell_rows(cell_dir: Path, summary: Dict[str, Any]) -> List[Dict[str, Any]]:
    rows = []
    for direction in DIRECTIONS:
        row = {
            "seed": summary["seed"],
            "system": summary["system"],
            "regime": summary["regime"],
            "variant": summary["variant"],
            "direction": direction.label,
            "mcd": float("nan"),
            "source_mcd": float("nan"),
            "f0_rmse": float("nan"),
            "valid_mse": summary.get("valid_mse", float("nan")),
            "parameters": summary["parameters"],
            "status": summary["status"],
        }
        table_path = cell_dir / f"evaluation_{direction.slug}.tsv"
        if summary["status"] == "ok":
            if table_path.exists():
                table = pd.read_csv(table_path, sep="\t")
                row["mcd"] = float(table["mcd"].mean())
                row["source_mcd"] = float(table["source_mcd"].mean())
                row["f0_rmse"] = float(table["f0_rmse"].mean())
            else:
                row["status"] = "missing"
        rows.append(row)
    return rows


def _sign_tests(cells: pd.DataFrame) -> pd.DataFrame:
    valid = cells[cells["status"] == "ok"]
    per_seed = valid.groupby(["system", "seed"])["mcd"].mean().unstack("system")
    rows = []
    for better, worse in CLAIMS:
        if better not in per_seed or worse not in per_seed:
            continue
        both = per_seed[[better, worse]].dropna()
        wins = int((both[better] < both[worse]).sum())
        seeds = int(len(both))
        p_value = float(binomtest(wins, seeds, 0.5, alternative="greater").pvalue) if seeds else float("nan")
        rows.append({
            "better": better,
            "worse": worse,
            "wins": wins,
            "seeds": seeds,
            "mean_difference": float((both[better] - both[worse]).mean()) if seeds else float("nan"),
            "p_value": p_value,
        })
    return pd.DataFrame(rows, columns=["better", "worse", "wins", "seeds", "mean_difference", "p_value"])


def assemble_report(out_root: Path) -> ExperimentReport:
    """
    Rebuild the ExperimentReport from the cell artifacts under `out_root`.

    Reduction runs in a fixed (seed, system, direction) order, so the report
    is bit-identical for identical artifacts.
    """
    out_root = Path(out_root)
    rows: List[Dict[str, Any]] = []
    for cell_file in sorted(out_root.glob(f"seed_*/*/{CELL_FILE}")):
        summary = json.loads(cell_file.read_text())
        rows.extend(_cell_rows(cell_file.parent, summary))
    if not rows:
        raise XlvcError(f"no experiment cells under {out_root}")

    cells = pd.DataFrame(rows).sort_values(["seed", "system", "direction"], kind="mergesort").reset_index(drop=True)
    valid = cells[cells["status"] == "ok"]
    summary = (
        cells.groupby(["system", "direction"], sort=True)
        .agg(parameters=("parameters", "max"))
        .join(
            valid.groupby(["system", "direction"]).agg(
                mcd_mean=("mcd", "mean"),
                mcd_std=("mcd", "std"),
                valid_cells=("mcd", "count"),
                valid_mse_mean=("valid_mse", "mean"),
                source_mcd=("source_mcd", "mean"),
                f0_rmse=("f0_rmse", "mean"),
            )
        )
        .reset_index()
    )
    summary["valid_cells"] = summary["valid_cells"].fillna(0).astype(int)
    summary["mcd_std"] = summary["mcd_std"].fillna(0.0)
    seeds = sorted(int(s) for s in cells["seed"].unique())
    report = ExperimentReport(seeds=seeds, cells=cells, summary=summary, sign_tests=_sign_tests(cells))
    logger.info("report_assembled", seeds=len(seeds), cells=len(cells), invalid=int((cells["status"] != "ok").sum()))
    return report
