"""
xlvc: command-line entry point.

    xlvc gen-corpus --out corpus/
    xlvc extract-ppg --corpus corpus/ --regime both
    xlvc train --corpus corpus/ --regime mppg --variant ls --out runs/mppg-ls
    xlvc convert --checkpoint runs/mppg-ls/best.xvck --corpus corpus/ \\
        --utterance A00_TA00 --target-speaker B01 --out out.xvcf
    xlvc evaluate --checkpoint runs/mppg-ls/best.xvck \\
        --manifest corpus/test_manifest.mppg.jsonl --direction A->B
    xlvc gradcheck
    xlvc experiment --seeds 0 1 2 3 4

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import structlog

from config.config_manager import ConfigurationError, ConfigurationManager, RunConfig

from . import __version__
from .data_collection.corpus_generator import (
    MANIFEST_FILE,
    TEST_MANIFEST_FILE,
    CorpusGenerator,
    load_corpus_config,
    load_world,
)
from .data_collection.phone_recognizer import extract_corpus_ppgs, ppg_manifest_name
from .exceptions import ManifestError, UsageError, XlvcError
from .feature_store.feature_definitions import LanguageId, PosteriorgramKind
from .feature_store.manifest import CorpusManifest
from .logging_config import configure_logging
from .model_deployment.voice_converter import VoiceConverter
from .model_development.gradient_check import gradient_check
from .model_development.layers import init_params
from .model_development.model_configuration import ArchitectureConfig
from .model_development.param_store import ParamStore
from .model_evaluation.comparative_analysis import run_comparison
from .model_evaluation.system_evaluation import Direction, evaluate_system
from .model_training.modularized_network import ModularizedNetwork
from .model_training.train_pipeline import BEST_CHECKPOINT, train
from .model_training.trained_model import TrainedModel

logger = structlog.get_logger(__name__)

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_INPUT_DIM = 6
GRADCHECK_OUTPUT_DIM = 13
REGIME_CHOICES = ("bppg", "mppg")


def _regimes(choice: str) -> List[PosteriorgramKind]:
    if choice == "both":
        return [PosteriorgramKind.from_regime(name) for name in REGIME_CHOICES]
    return [PosteriorgramKind.from_regime(choice)]


def _load_config(args: argparse.Namespace) -> RunConfig:
    manager = ConfigurationManager(preset=args.preset)
    return manager.load(
        run_file=getattr(args, "config", None),
        overrides={"runtime.threads": args.threads, "logging.level": args.log_level},
    )


def cmd_gen_corpus(args: argparse.Namespace, cfg: RunConfig) -> int:
    out_dir = Path(args.out)
    generator = CorpusGenerator(cfg.corpus, n_jobs=cfg.runtime.workers)
    manifest, test_manifest = generator.generate(out_dir)
    cfg.echo(out_dir)

    counts = manifest.counts()
    print(counts.to_string(index=False))
    per_language = counts.groupby("language")["utterances"].sum()
    for language, total in per_language.items():
        print(f"language {language}: {total} utterances")
    print(f"{len(manifest)} training/validation records, {len(test_manifest)} test records")
    print(out_dir / MANIFEST_FILE)
    return 0


def cmd_extract_ppg(args: argparse.Namespace, cfg: RunConfig) -> int:
    corpus_dir = Path(args.corpus)
    world = load_world(corpus_dir)
    for regime in _regimes(args.regime):
        for name in (MANIFEST_FILE, TEST_MANIFEST_FILE):
            manifest = CorpusManifest.load(corpus_dir / name)
            extract_corpus_ppgs(manifest, regime, world, name, n_jobs=cfg.runtime.workers)
            print(corpus_dir / ppg_manifest_name(name, regime))
    return 0


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    corpus_dir = Path(args.corpus)
    regime = PosteriorgramKind.from_regime(args.regime)
    corpus = load_corpus_config(corpus_dir)
    manifest = CorpusManifest.load(corpus_dir / ppg_manifest_name(MANIFEST_FILE, regime))
    arch = cfg.architecture.build(corpus.input_dim(regime), corpus.acoustic_width, args.variant)

    out_dir = Path(args.out)
    cfg.echo(out_dir)
    state = train(arch, manifest, cfg.training, out_dir=out_dir, resume=args.resume)
    for language, value in sorted(state.best_valid_mse.items()):
        print(f"validation MSE {language}: {value:.6f}")
    print(f"best epoch mean validation MSE: {state.best_mean_valid:.6f} ({arch.parameter_count()} parameters)")
    print(out_dir / BEST_CHECKPOINT)
    return 0


def _find_record(corpus_dir: Path, regime: PosteriorgramKind, utterance_id: str):
    for name in (TEST_MANIFEST_FILE, MANIFEST_FILE):
        path = corpus_dir / ppg_manifest_name(name, regime)
        if not path.exists():
            continue
        manifest = CorpusManifest.load(path)
        try:
            return manifest, manifest[utterance_id]
        except ManifestError:
            continue
    raise ManifestError(f"utterance {utterance_id} not found in the {regime.regime_name} manifests of {corpus_dir}")


def cmd_convert(args: argparse.Namespace, cfg: RunConfig) -> int:
    model = TrainedModel.load(Path(args.checkpoint))
    manifest, record = _find_record(Path(args.corpus), model.regime, args.utterance)
    settings = cfg.generation
    if args.f0_mode:
        settings = settings.model_copy(update={"f0_mode": args.f0_mode})

    out_path = Path(args.out)
    cfg.echo(out_path.parent)
    converted = VoiceConverter(model, settings).convert(
        manifest, record, args.target_speaker, model.regime, out_path=out_path
    )
    print(f"{record.utterance_id} -> {args.target_speaker}: {converted.num_frames} frames")
    print(out_path)
    return 0


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    model = TrainedModel.load(Path(args.checkpoint))
    manifest = CorpusManifest.load(Path(args.manifest))
    direction = Direction.parse(args.direction)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint).parent / "evaluation"
    cfg.echo(out_dir)
    result = evaluate_system(
        model,
        manifest,
        direction,
        out_dir,
        settings=cfg.generation,
        cfg=cfg.evaluation.mcd_config(),
        n_jobs=cfg.runtime.workers,
    )
    print(result.table.groupby("gender_pair")[["mcd", "source_mcd"]].mean().to_string())
    print(f"{direction.label}: mean MCD {result.mean_mcd:.4f} dB over {len(result.table)} pairs")
    return 0


def cmd_gradcheck(args: argparse.Namespace, cfg: RunConfig) -> int:
    arch = ArchitectureConfig.from_preset(
        args.arch_preset, GRADCHECK_INPUT_DIM, GRADCHECK_OUTPUT_DIM, args.variant
    )
    layers = ModularizedNetwork(arch, seed=args.seed).layers_for(LanguageId.A)
    # random output layer as well, so gradients reach every parameter
    params = ParamStore()
    init_params(layers, params, np.random.default_rng(args.seed))
    rng = np.random.default_rng(args.seed + 1)
    inputs = rng.standard_normal((args.frames, arch.input_dim))
    result = gradient_check(layers, params, inputs, epsilon=args.epsilon, seed=args.seed)

    print(
        f"max relative error {result.max_relative_error:.3e} over {result.checked_scalars} scalars "
        f"(worst {result.worst_parameter}[{result.worst_index}])"
    )
    if result.max_relative_error > GRADCHECK_TOLERANCE:
        logger.error("gradient_check_failed", max_relative_error=result.max_relative_error)
        return 1
    return 0


def cmd_experiment(args: argparse.Namespace, cfg: RunConfig) -> int:
    seeds = list(args.seeds) if args.seeds else list(cfg.evaluation.seeds)
    if len(seeds) == 1 and args.seeds:
        # `--seeds 5` means five seeds starting at 0
        seeds = list(range(seeds[0]))
    cfg = cfg.model_copy(update={"evaluation": cfg.evaluation.model_copy(update={"seeds": seeds})})
    out_root = Path(args.out) if args.out else cfg.run_dir("experiment")
    cfg.echo(out_root)

    report = run_comparison(
        cfg.corpus,
        seeds,
        cfg.training,
        out_root,
        arch_preset=cfg.architecture.preset,
        budget_matched_li=cfg.evaluation.budget_matched_li,
        settings=cfg.generation,
        mcd_config=cfg.evaluation.mcd_config(),
        n_jobs=cfg.runtime.workers,
    )
    print(report.to_text())
    print(out_root)
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "gen-corpus": cmd_gen_corpus,
    "extract-ppg": cmd_extract_ppg,
    "train": cmd_train,
    "convert": cmd_convert,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xlvc", description="Modular cross-lingual voice conversion pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="Worker cap (default: $XLVC_THREADS or the machine core count)")
    parser.add_argument("--log-level", default=None, help="Log level (DEBUG, INFO, WARNING, ...)")
    parser.add_argument("--preset", choices=("toy", "paper", "smoke"), default="toy", help="Settings overlay")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-corpus", help="Generate a synthetic bilingual corpus")
    gen.add_argument("--config", help="key = value run file")
    gen.add_argument("--out", required=True, help="Corpus directory")

    ppg = sub.add_parser("extract-ppg", help="Run a recognizer regime over a corpus")
    ppg.add_argument("--corpus", required=True, help="Corpus directory")
    ppg.add_argument("--regime", choices=REGIME_CHOICES + ("both",), default="both")

    trn = sub.add_parser("train", help="Train one system")
    trn.add_argument("--config", help="key = value run file")
    trn.add_argument("--corpus", required=True, help="Corpus directory with extracted PPGs")
    trn.add_argument("--regime", choices=REGIME_CHOICES, required=True)
    trn.add_argument("--variant", choices=("li", "ls"), required=True)
    trn.add_argument("--out", required=True, help="Run directory for checkpoints and history")
    trn.add_argument("--resume", action="store_true", help="Continue from last.xvck in --out")

    cnv = sub.add_parser("convert", help="Convert one utterance to a target speaker")
    cnv.add_argument("--config", help="key = value run file")
    cnv.add_argument("--checkpoint", required=True)
    cnv.add_argument("--corpus", required=True, help="Corpus directory holding the utterance")
    cnv.add_argument("--utterance", required=True)
    cnv.add_argument("--target-speaker", required=True)
    cnv.add_argument("--f0-mode", choices=("linear", "network"), default=None)
    cnv.add_argument("--out", required=True, help="Output XVCF file")

    evl = sub.add_parser("evaluate", help="MCD of one system in one direction")
    evl.add_argument("--config", help="key = value run file")
    evl.add_argument("--checkpoint", required=True)
    evl.add_argument("--manifest", required=True, help="Regime test manifest")
    evl.add_argument("--direction", required=True, help="A->B or B->A")
    evl.add_argument("--out", default=None, help="Output directory (default: evaluation/ next to the checkpoint)")

    grd = sub.add_parser("gradcheck", help="Finite-difference check of the full network gradient")
    grd.add_argument("--arch-preset", default="smoke", choices=("smoke", "toy", "paper"))
    grd.add_argument("--variant", choices=("LI", "LS"), default="LS")
    grd.add_argument("--frames", type=int, default=5)
    grd.add_argument("--epsilon", type=float, default=1e-5)
    grd.add_argument("--seed", type=int, default=0)

    exp = sub.add_parser("experiment", help="Four-system comparison over several seeds")
    exp.add_argument("--config", help="key = value run file")
    exp.add_argument("--seeds", type=int, nargs="+", default=None,
                     help="Seed list, or a single count N meaning seeds 0..N-1")
    exp.add_argument("--out", default=None, help="Experiment directory (default: content-addressed under run_root)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = _load_config(args)
    except ConfigurationError as e:
        print(f"xlvc: configuration error: {e}", file=sys.stderr)
        return 2
    configure_logging(cfg.logging.level, cfg.logging.renderer)

    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigurationError as e:
        print(f"xlvc: configuration error: {e}", file=sys.stderr)
        return 2
    except UsageError as e:
        print(f"xlvc {args.command}: {e}", file=sys.stderr)
        return 2
    except (XlvcError, ValueError, OSError, np.linalg.LinAlgError) as e:
        logger.error("command_failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"xlvc {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
