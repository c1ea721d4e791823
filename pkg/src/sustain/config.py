"""Pipeline configuration: an INI file whose keys can be overridden by flags."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from sustain.errors import InvalidConfig
from sustain.explain import ExplainConfig
from sustain.learner.boosting import TrainConfig


def _csv_numbers(text: str, cast) -> tuple:
    try:
        return tuple(cast(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise InvalidConfig(f"expected a comma-separated list of numbers, got {text!r}") from None


@dataclass
class PipelineConfig:
    out: Path = Path(".")
    events: Path | None = None
    projects: Path | None = None
    profiles: Path | None = None
    features: Path | None = None
    labels: Path | None = None
    model: Path | None = None
    explanations: Path | None = None
    event_format: str = "csv"
    m: tuple[int, ...] = (3,)
    t: tuple[float, ...] = (2.0,)
    k: tuple[float, ...] = (1.0,)
    seed: int = 0
    folds: int = 10
    dimension: str = "all"
    selection: str = "reference"   # or "percentile"
    percentile: float = 0.95
    on_missing: str = "error"
    by: str = "contribution"
    train: TrainConfig = field(default_factory=TrainConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("m", "t", "k"):
            if not getattr(self, name) or min(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} values must be >= 1, got {getattr(self, name)}")
        if self.selection not in ("reference", "percentile"):
            raise InvalidConfig(f"selection must be 'reference' or 'percentile', got {self.selection!r}")
        if self.on_missing not in ("error", "zero"):
            raise InvalidConfig(f"on_missing must be 'error' or 'zero', got {self.on_missing!r}")

    def path(self, name: str, default_file: str) -> Path:
        value = getattr(self, name)
        return Path(value) if value is not None else self.out / default_file

    def single(self, name: str):
        values = getattr(self, name)
        if len(values) != 1:
            raise InvalidConfig(f"this stage takes a single {name}, got {values}")
        return values[0]


_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig) if f.name != "seed"}
_EXPLAIN_KEYS = {"n_samples": int, "kernel_width": float, "ridge_alpha": float}
_SYNTH_KEYS = {"n_projects": int, "noise": float, "intercept": float,
               "developers_mean": float, "noncode_mean": float, "intensity_median": float}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flatten every section of an INI file into one key -> text mapping."""
    parser = configparser.ConfigParser(interpolation=None)
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            parser.read_file(fh, source=str(path))
        except configparser.Error as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            key = key.replace("-", "_")
            if key in flat and flat[key] != value:
                raise InvalidConfig(f"{path}: key {key!r} set twice with different values")
            flat[key] = value
    return flat


def build_config(values: Mapping[str, object]) -> PipelineConfig:
    """Typed config from raw values; unknown keys are an error."""
    values = {k: v for k, v in values.items() if v is not None}
    kw: dict = {}
    train_kw: dict = {}
    explain_kw: dict = {}
    synth_kw: dict = {}
    try:
        for key, raw in values.items():
            if key in ("out", "events", "projects", "profiles", "features", "labels", "model", "explanations"):
                kw[key] = Path(str(raw))
            elif key == "m":
                kw[key] = _csv_numbers(raw, int)
            elif key in ("t", "k"):
                kw[key] = _csv_numbers(raw, float)
            elif key in ("seed", "folds"):
                kw[key] = int(raw)
            elif key == "percentile":
                kw[key] = float(raw)
            elif key in ("dimension", "selection", "on_missing", "event_format", "by"):
                kw[key] = str(raw)
            elif key in _TRAIN_KEYS:
                train_kw[key] = (int if key in ("n_trees", "max_depth") else float)(raw)
            elif key in _EXPLAIN_KEYS:
                explain_kw[key] = _EXPLAIN_KEYS[key](raw)
            elif key in _SYNTH_KEYS:
                synth_kw[key] = _SYNTH_KEYS[key](raw)
            else:
                raise InvalidConfig(f"unknown configuration key {key!r}")
    except ValueError as exc:
        raise InvalidConfig(f"bad configuration value: {exc}") from None
    seed = kw.get("seed", 0)
    kw["train"] = TrainConfig(seed=seed, **train_kw)
    kw["explain"] = ExplainConfig(seed=seed, **explain_kw)
    kw["synth"] = synth_kw
    return PipelineConfig(**kw)
