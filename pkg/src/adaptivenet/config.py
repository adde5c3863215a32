"""Run configuration read from TOML.

Every section and key is optional; omitted values take the defaults below.
Unknown sections or keys are errors.  Example::

    [synth]
    n_patients = 2000
    noise_sigma = 0.5
    seed = 1

    [sampling]
    max_history = 5.0       # years of events fed to the model

    [model]
    share_encoder = true

    [train]
    steps = 7000
    learning_rate = 1e-4

The configuration hash is the SHA-256 of the canonical JSON of the fully
resolved configuration, so two runs with equal hashes used identical
settings.  Paths do not enter the hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .sampling import SamplingConfig
from .synthetic import REGISTRY_MISSING_RATES, SynthConfig
from .training import TrainConfig

MODEL_KINDS = ("adaptivenet", "fcn", "naive")
ENV_PATHS = {"records": "ADAPTIVENET_RECORDS", "out_dir": "ADAPTIVENET_OUT_DIR"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSection:
    n_patients: int = 1000
    visits_per_year: float = 2.0
    med_adjust_rate: float = 0.5
    noise_sigma: float = 0.5
    seed: int = 0
    horizon_years: float = 6.0
    registry_missingness: bool = False

    def build(self) -> SynthConfig:
        d = asdict(self)
        missing = dict(REGISTRY_MISSING_RATES) if d.pop("registry_missingness") else {}
        return SynthConfig(missing_rates=missing, **d)


@dataclass(frozen=True)
class SamplingSection:
    max_history: float = 5.0
    min_horizon: float = 0.25
    max_horizon: float = 1.0
    min_visits: int = 3

    def build(self) -> SamplingConfig:
        return SamplingConfig(**asdict(self))


@dataclass(frozen=True)
class ModelSection:
    kind: str = "adaptivenet"
    encoder_dim: int = 100
    encoder_layers: int = 1
    share_encoder: bool = False
    lstm_hidden: int = 100
    rho_dim: int = 100
    rho_layers: int = 2
    dropout: float = 0.0


@dataclass(frozen=True)
class FcnSection:
    hidden_dim: int = 32
    n_hidden: int = 3
    dropout: float = 0.1


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 256
    steps: int = 7000
    learning_rate: float = 1e-4
    l1_coeff: float = 1e-5
    seed: int = 0

    def build(self) -> TrainConfig:
        return TrainConfig(**asdict(self))


@dataclass(frozen=True)
class EvalSection:
    folds: int = 5
    fold_seed: int = 0


@dataclass(frozen=True)
class PathsSection:
    records: str = ""
    out_dir: str = "runs"


SECTIONS = {
    "synth": SynthSection,
    "sampling": SamplingSection,
    "model": ModelSection,
    "fcn": FcnSection,
    "train": TrainSection,
    "eval": EvalSection,
    "paths": PathsSection,
}


@dataclass(frozen=True)
class RunConfig:
    synth: SynthSection = field(default_factory=SynthSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    model: ModelSection = field(default_factory=ModelSection)
    fcn: FcnSection = field(default_factory=FcnSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def hashed_dict(self) -> dict:
        d = asdict(self)
        d.pop("paths")
        return d

    @property
    def hash(self) -> str:
        text = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def run_dir_name(self) -> str:
        return f"{self.hash[:12]}-seed{self.train.seed}"

    def override(self, section: str, **values) -> "RunConfig":
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        checked = _check_section(section, values)
        return replace(self, **{section: replace(current, **checked)})

    def validate(self) -> "RunConfig":
        try:
            self.synth.build()
            self.sampling.build()
            self.train.build()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.model.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {', '.join(MODEL_KINDS)}")
        if not 0.0 <= self.model.dropout < 1.0 or not 0.0 <= self.fcn.dropout < 1.0:
            raise ConfigError("dropout rates must lie in [0, 1)")
        for name in ("encoder_dim", "encoder_layers", "lstm_hidden", "rho_dim"):
            if getattr(self.model, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if self.model.rho_layers < 0:
            raise ConfigError("model.rho_layers must be >= 0")
        if self.fcn.hidden_dim < 1 or self.fcn.n_hidden < 0:
            raise ConfigError("fcn.hidden_dim must be >= 1 and fcn.n_hidden >= 0")
        if self.eval.folds < 2:
            raise ConfigError("eval.folds must be >= 2")
        return self


def _check_value(where, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
        kind = "a boolean"
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
        kind = "an integer"
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
        kind = "a number"
    else:
        ok = isinstance(value, str)
        kind = "a string"
    if not ok:
        raise ConfigError(f"{where}: expected {kind}, got {value!r}")
    return value


def _check_section(name, values):
    cls = SECTIONS[name]
    defaults = {f.name: f.default for f in fields(cls)}
    out = {}
    for key, value in values.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {name}.{key}; allowed: {', '.join(defaults)}")
        out[key] = _check_value(f"{name}.{key}", value, defaults[key])
    return out


def from_mapping(data: dict) -> RunConfig:
    sections = {}
    for name, values in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]; allowed: {', '.join(SECTIONS)}")
        if not isinstance(values, dict):
            raise ConfigError(f"[{name}] must be a table")
        sections[name] = SECTIONS[name](**_check_section(name, values))
    return RunConfig(**sections).validate()


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return from_mapping(data)


def load(path=None, environ=None) -> RunConfig:
    """Read ``path`` (defaults only when None) and apply path overrides from the environment."""
    if path is None:
        cfg = RunConfig()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            cfg = loads(text)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    env = os.environ if environ is None else environ
    paths = {key: env[var] for key, var in ENV_PATHS.items() if env.get(var)}
    return cfg.override("paths", **paths)
