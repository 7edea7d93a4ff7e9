"""Run configuration: flat ``key = value`` files with a fixed key set.

Precedence is defaults < config file < command-line flags. Environment
variables are never consulted.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

TASKS = ("P1", "P2")
MODELS = ("dt", "lr", "svm", "rf", "gbt")
PROFILES = ("paper", "ex-ante")
ENRICHMENT = ("launch-year", "weighted")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    input: str = ""
    econ_table: str = ""
    task: str = "P2"
    model: str = "all"
    profile: str = "paper"
    enrichment: str = "launch-year"
    test_fraction: float = 0.2
    seed: int = 42
    partitions: int = 1
    workers: int = 1
    output_dir: str = "run"
    min_category_count: int = 50
    averaging: str = "weighted"
    dt_max_depth: int = 10
    dt_max_bins: int = 32
    dt_min_leaf_weight: float = 1.0
    dt_impurity: str = "gini"
    rf_n_trees: int = 100
    rf_max_depth: int = 10
    rf_max_bins: int = 32
    rf_min_leaf_weight: float = 1.0
    rf_feature_subset: str = "sqrt"
    rf_bootstrap: bool = True
    gbt_iterations: int = 100
    gbt_learning_rate: float = 0.1
    gbt_max_depth: int = 5
    gbt_max_bins: int = 32
    gbt_min_leaf_weight: float = 1.0
    lr_iterations: int = 200
    lr_learning_rate: float = 0.5
    lr_l2: float = 1e-4
    svm_iterations: int = 200
    svm_learning_rate: float = 0.1
    svm_l2: float = 1e-4

    @property
    def models(self) -> list[str]:
        return list(MODELS) if self.model == "all" else [self.model]

    def validate(self, check_paths: bool = True) -> "RunConfig":
        self.task = self.task.upper()
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.model != "all" and self.model not in MODELS:
            raise ConfigError(f"model must be 'all' or one of {MODELS}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        if self.enrichment not in ENRICHMENT:
            raise ConfigError(f"enrichment must be one of {ENRICHMENT}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.partitions < 1 or self.workers < 1:
            raise ConfigError("partitions and workers must be >= 1")
        if self.averaging not in ("weighted", "macro"):
            raise ConfigError("averaging must be 'weighted' or 'macro'")
        if check_paths:
            if not self.input or not Path(self.input).is_file():
                raise ConfigError(f"input file not found: {self.input!r}")
            if self.econ_table and not Path(self.econ_table).is_file():
                raise ConfigError(f"econ table not found: {self.econ_table!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def snapshot_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw.strip()


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace(".", "_").replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        setattr(cfg, key, _coerce(key, str(value)) if isinstance(value, str) else value)
    return cfg


def render_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
