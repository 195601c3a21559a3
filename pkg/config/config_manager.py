import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ml_pipeline import __version__
from ml_pipeline.data_collection.corpus_config import GenerativeConfig
from ml_pipeline.model_deployment.voice_converter import GenerationSettings
from ml_pipeline.model_development.model_configuration import (
    ARCHITECTURE_PRESETS,
    ArchitectureConfig,
    TrainingConfig,
)
from ml_pipeline.model_evaluation.performance_metrics import McdConfig

SETTINGS_DIR = Path(__file__).resolve().parent / "settings"
PRESETS = ("toy", "paper", "smoke")
EFFECTIVE_CONFIG_FILE = "effective_config.yml"
VERSION_FILE = "VERSION"

# Sections reuse the pipeline's own validated models
CorpusSettings = GenerativeConfig
TrainingSettings = TrainingConfig


class ConfigurationError(Exception):
    """Invalid settings file, run file or override."""


class ArchitectureSettings(BaseModel):
    """Preset widths, optionally overridden one by one."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    preset: str = Field("toy", pattern="^(toy|paper|smoke)$")
    projection_width: Optional[int] = Field(None, ge=1)
    blstm_width: Optional[int] = Field(None, ge=1)
    head_width: Optional[int] = Field(None, ge=1)

    def build(self, input_dim: int, output_dim: int, variant: str) -> ArchitectureConfig:
        widths = dict(ARCHITECTURE_PRESETS[self.preset])
        for key in widths:
            value = getattr(self, key)
            if value is not None:
                widths[key] = value
        return ArchitectureConfig(variant=variant.upper(), input_dim=input_dim, output_dim=output_dim, **widths)


class EvaluationSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    dim_range: Tuple[int, Optional[int]] = (1, None)
    budget_matched_li: bool = False

    def mcd_config(self) -> McdConfig:
        return McdConfig(dim_range=self.dim_range)


class RuntimeSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    threads: Optional[int] = Field(None, ge=1)
    run_root: str = "runs"

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1


class LoggingSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    level: str = "INFO"
    renderer: str = Field("console", pattern="^(console|json)$")


class RunConfig(BaseModel):
    """Effective configuration of one command invocation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    corpus: CorpusSettings = Field(default_factory=CorpusSettings)
    architecture: ArchitectureSettings = Field(default_factory=ArchitectureSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    generation: GenerationSettings = Field(default_factory=GenerationSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    def config_hash(self) -> str:
        """SHA-256 of the settings that influence results (runtime and logging excluded)."""
        payload = self.model_dump(mode="json", exclude={"runtime", "logging"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def run_dir(self, command: str) -> Path:
        return Path(self.runtime.run_root) / f"{command}-{self.config_hash()[:12]}"

    def echo(self, run_dir: Path) -> Path:
        """Write effective_config.yml and VERSION into a run directory."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / EFFECTIVE_CONFIG_FILE, "w") as handle:
            yaml.safe_dump(self.model_dump(mode="json"), handle, sort_keys=True)
        (run_dir / VERSION_FILE).write_text(f"{__version__}\n")
        return run_dir


def _section_fields(section: str) -> Optional[Dict[str, Any]]:
    field_info = RunConfig.model_fields.get(section)
    if field_info is None:
        return None
    return field_info.annotation.model_fields  # type: ignore[union-attr]


def parse_run_file(path: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """
    Parse a `key = value` run file into nested sections.

    Args:
        path (Union[str, Path]): Run file; `#` starts a comment, keys are
            dotted (`corpus.noise_sigma = 0.0`), values are YAML scalars or
            flow lists

    Returns:
        Dict[str, Dict[str, Any]]: section -> key -> value

    Raises:
        ConfigurationError: Naming the offending line on syntax errors or
            unknown keys
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ConfigurationError(f"cannot read run file {path}: {e}") from e

    parsed: Dict[str, Dict[str, Any]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, text = (part.strip() for part in line.partition("="))
        section, _, name = key.partition(".")
        fields = _section_fields(section)
        if not name or fields is None or name not in fields:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            value = yaml.safe_load(text) if text else None
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path}:{lineno}: cannot parse value for {key!r}: {e}") from e
        parsed.setdefault(section, {})[name] = value
    return parsed


class ConfigurationManager:
    """
    Builds a RunConfig from base.yml, an optional preset overlay, an optional
    run file, environment variables and explicit overrides, in that order.
    """

    def __init__(self, preset: str = "toy", settings_dir: Optional[Path] = None, env_file: Optional[Path] = None):
        """
        Args:
            preset (str): Overlay name (toy, paper or smoke). Defaults to 'toy'.
            settings_dir (Path, optional): Directory holding base.yml and overlays
            env_file (Path, optional): .env file; defaults to the nearest one
        """
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}, expected one of {list(PRESETS)}")
        self.preset = preset
        self.settings_dir = Path(settings_dir) if settings_dir else SETTINGS_DIR
        self._load_env_files(env_file)

    def _load_env_files(self, env_file: Optional[Path]) -> None:
        if env_file is not None:
            load_dotenv(dotenv_path=env_file, override=False)
        else:
            load_dotenv(override=False)

    def _read_yaml(self, name: str) -> Dict[str, Any]:
        path = self.settings_dir / name
        try:
            with open(path, "r") as handle:
                return yaml.safe_load(handle) or {}
        except FileNotFoundError as e:
            raise ConfigurationError(f"Configuration file not found: {e}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Error parsing YAML configuration: {e}")

    def _deep_merge(self, base: Dict, update: Dict) -> Dict:
        """
        Recursively merge two dictionaries.

        Args:
            base (Dict): Base configuration dictionary
            update (Dict): Overlay dictionary

        Returns:
            Dict: Merged configuration dictionary
        """
        for key, value in update.items():
            if isinstance(value, dict):
                base[key] = self._deep_merge(base.get(key, {}) or {}, value)
            else:
                base[key] = value
        return base

    def load_settings(self) -> Dict[str, Any]:
        settings = self._read_yaml("base.yml")
        if self.preset != "toy":
            settings = self._deep_merge(settings, self._read_yaml(f"{self.preset}.yml"))
        return settings

    @staticmethod
    def env_overrides() -> Dict[str, Dict[str, Any]]:
        overrides: Dict[str, Dict[str, Any]] = {}
        threads = os.environ.get("XLVC_THREADS")
        if threads:
            try:
                overrides.setdefault("runtime", {})["threads"] = int(threads)
            except ValueError:
                raise ConfigurationError(f"XLVC_THREADS must be an integer, got {threads!r}") from None
        run_root = os.environ.get("XLVC_RUN_ROOT")
        if run_root:
            overrides.setdefault("runtime", {})["run_root"] = run_root
        return overrides

    def load(
        self,
        run_file: Optional[Union[str, Path]] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> RunConfig:
        """
        Assemble and validate the effective configuration.

        Args:
            run_file (Union[str, Path], optional): `key = value` run file
            overrides (Dict[str, Any], optional): Dotted keys set last
                (e.g. {'runtime.threads': 4}); None values are ignored

        Returns:
            RunConfig: Validated configuration

        Raises:
            ConfigurationError: On unreadable files, unknown keys or invalid values
        """
        settings = self.load_settings()
        if run_file is not None:
            settings = self._deep_merge(settings, parse_run_file(run_file))
        settings = self._deep_merge(settings, self.env_overrides())
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            fields = _section_fields(section)
            if not name or fields is None or name not in fields:
                raise ConfigurationError(f"unknown override {key!r}")
            settings.setdefault(section, {})[name] = value
        try:
            return RunConfig(**settings)
        except ValidationError as e:
            raise ConfigurationError(f"invalid configuration: {e}") from e
