"""Run configuration: defaults <- YAML file <- command-line overrides."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .data import SyntheticConfig
from .errors import M3colError
from .losses import ContrastiveConfig
from .model import ModelDims, TrainConfig

OUT_DIR_ENV = "M3COL_OUT_DIR"
PRESETS = ("rosmap", "brca", "synthetic")


class ConfigError(M3colError, ValueError):
    pass


DEFAULTS = {
    "name": "run",
    "seed": 0,
    "out_dir": "runs/run",
    "dataset": {"manifest": None, "synthetic": None, "standardize": True},
    "model": {"hidden": 1000, "embed": 1000, "cls_hidden": 1000, "dropout": 0.5},
    "train": {
        "epochs": 500,
        "lr": 5e-3,
        "weight_decay": 1e-3,
        "step_size": 250,
        "gamma": 0.1,
        "alpha": 0.15,
        "batch_size": None,
        "batch_gradient": None,
    },
    "contrastive": {
        "tau": 0.1,
        "beta": 0.1,
        "schedule_fraction": 1.0 / 3.0,
        "mode": "scheduled",
        "unimodal_supervision": True,
        "mixup_targets": False,
    },
}


def _merge(base: dict, update: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{where}{key}'")
        if isinstance(base[key], dict) and isinstance(value, dict) and key != "synthetic":
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _coerce(value, default, key: str):
    """Match the type of the default; YAML reads ``1e-3`` (no dot) as a string."""
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{key}' must be true or false, got {value!r}")
        return value
    if isinstance(default, (int, float)):
        if isinstance(value, bool):
            raise ConfigError(f"'{key}' must be a number, got {value!r}")
        try:
            num = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"'{key}' must be a number, got {value!r}") from None
        if isinstance(default, int):
            if num != int(num):
                raise ConfigError(f"'{key}' must be an integer, got {value!r}")
            return int(num)
        return num
    return value


def _typed(cfg: dict, defaults: dict = DEFAULTS, where: str = "") -> dict:
    out = {}
    for key, value in cfg.items():
        default = defaults.get(key)
        if isinstance(default, dict) and isinstance(value, dict):
            out[key] = _typed(value, default, f"{where}{key}.")
        else:
            out[key] = _coerce(value, default, f"{where}{key}")
    return out


def read_config_file(ref: str) -> tuple:
    """Return ``(mapping, base_dir)`` for a path or a ``preset:NAME`` reference."""
    if ref.startswith("preset:") or ref in PRESETS:
        name = ref.split(":", 1)[-1]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}', choose from {', '.join(PRESETS)}")
        text = resources.files("m3col").joinpath("presets", f"{name}.yaml").read_text()
        base = Path.cwd()
    else:
        path = Path(ref)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {ref}: {exc.strerror}") from None
        base = path.resolve().parent
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {ref} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {ref} must be a mapping")
    return data, base


def parse_override(item: str) -> dict:
    """``train.epochs=10`` -> ``{"train": {"epochs": 10}}``."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    value = yaml.safe_load(raw)
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def resolve(ref: Optional[str], overrides=(), seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    data, base = read_config_file(ref) if ref else ({}, Path.cwd())
    cfg = _merge(DEFAULTS, data)
    for item in overrides:
        cfg = _merge(cfg, parse_override(item))
    cfg = _typed(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    env_out = os.environ.get(OUT_DIR_ENV)
    if out is not None:
        cfg["out_dir"] = out
    elif env_out:
        cfg["out_dir"] = str(Path(env_out) / cfg["name"])
    manifest = cfg["dataset"]["manifest"]
    if manifest is not None and not Path(manifest).is_absolute():
        cfg["dataset"]["manifest"] = str(base / manifest)
    return cfg


@dataclass
class RunConfig:
    """Typed view of a resolved config mapping."""

    name: str
    seed: int
    out_dir: str
    manifest: Optional[str]
    synthetic: Optional[SyntheticConfig]
    standardize: bool
    model: dict
    train: TrainConfig
    raw: dict

    def dims_for(self, widths, num_classes: int) -> ModelDims:
        return ModelDims(tuple(widths), num_classes=num_classes, **self.model)


def build(cfg: dict) -> RunConfig:
    ds = cfg["dataset"]
    if (ds["manifest"] is None) == (ds["synthetic"] is None):
        raise ConfigError("dataset needs exactly one of 'manifest' or 'synthetic'")
    try:
        synthetic = None
        if ds["synthetic"] is not None:
            syn = dict(ds["synthetic"])
            syn.setdefault("seed", cfg["seed"])
            synthetic = SyntheticConfig(**syn)
        contrastive = ContrastiveConfig(**cfg["contrastive"])
        train = TrainConfig(contrastive=contrastive, **cfg["train"])
        ModelDims((1,), num_classes=2, **cfg["model"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return RunConfig(cfg["name"], int(cfg["seed"]), cfg["out_dir"], ds["manifest"], synthetic,
                     bool(ds["standardize"]), dict(cfg["model"]), train, cfg)


def synthetic_from_file(ref: str) -> SyntheticConfig:
    """Accept either a bare synthetic-generator mapping or a run config."""
    data, _ = read_config_file(ref)
    if "dataset" in data:
        data = (data.get("dataset") or {}).get("synthetic") or {}
    names = {f.name for f in fields(SyntheticConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
    try:
        return SyntheticConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic config: {exc}") from None
