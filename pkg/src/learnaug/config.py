"""Run configuration: a YAML file of sections mirroring the dataclasses below.

Every knob has a default, so an empty file (or no file) is a valid config.
Unknown sections or keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .augtrain import AugLossConfig
from .encoder import EncoderConfig, PretrainConfig
from .errors import ConfigError
from .evalharness import BiasExperimentSpec


@dataclass(frozen=True)
class DataSection:
    manifest: str | None = None
    batch_size: int = 64
    per_domain: int = 32
    length: int = 128


@dataclass(frozen=True)
class AugmentSection:
    K: int = 120
    sigma_init: float = 0.05
    sharpness: float = 100.0


@dataclass(frozen=True)
class TrainSection:
    steps: int = 200
    lr: float = 1e-4
    weight_decay: float = 0.0
    operator: str = "scalable"


@dataclass(frozen=True)
class EvaluateSection:
    n_train: int = 200
    n_test: int = 100
    length: int = 128
    freqs: tuple[float, float] = (3.0, 7.0)
    noise: float = 0.3
    mode: str = "P-FT"
    lookback: int = 96
    horizon: int = 16


@dataclass(frozen=True)
class BenchSection:
    K: int = 100
    lengths: tuple[int, ...] = (1000, 2000, 4000)
    reps: int = 5
    dense: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "out"
    data: DataSection = field(default_factory=DataSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    loss: AugLossConfig = field(default_factory=AugLossConfig)
    train: TrainSection = field(default_factory=TrainSection)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    bias: BiasExperimentSpec = field(default_factory=BiasExperimentSpec)
    bench: BenchSection = field(default_factory=BenchSection)


def _build(cls, raw, where: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    kwargs = {}
    for name, value in raw.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}" if where else name)
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(raw: dict | None) -> RunConfig:
    return _build(RunConfig, raw, "")


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = config_to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = [config_to_dict(x) if dataclasses.is_dataclass(x) else x for x in v]
        else:
            out[f.name] = v
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
