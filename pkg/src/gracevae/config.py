"""Plain-text ``key = value`` configuration.

One file may carry both the training keys and the benchmark-generation keys
(so ``synth`` and ``train`` can share it). Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import hetnet
from .encoder import GNN_KINDS, GnnVariant
from .causal import MECHANISMS
from .errors import ConfigError
from .objective import LossWeights, MmdConfig

TRAIN_KEYS = ("latent_dim", "gnn", "gnn_layers", "hidden", "embed", "lr", "batch_size", "epochs",
              "alpha_max", "beta_max", "lambda", "temp_max", "mmd_sigma", "kernel_num", "mechanism",
              "edge_mask", "seed", "split")
SYNTH_KEYS = ("obs_dim", "n_obs", "n_per_intervention", "edge_prob", "shift_scale", "mixing",
              "informativeness", "double_pairs")
SEED_ENV = "GRACE_SEED"


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int | None = None     # None: one latent per single intervention
    gnn: str = "sage"
    gnn_layers: int = 1
    hidden: int = 128
    embed: int = 16
    lr: float = 0.001
    batch_size: int = 32
    epochs: int = 100
    alpha_max: float = 8.0
    beta_max: float = 2.0
    lam: float = 1e-4
    temp_max: float = 4.0
    mmd_sigma: float = 1000.0
    kernel_num: int = 10
    mechanism: str = "mlp"
    edge_mask: tuple[str, ...] = hetnet.EDGE_KINDS
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        if self.gnn not in GNN_KINDS:
            raise ConfigError(f"config key 'gnn': expected one of {GNN_KINDS}, got {self.gnn!r}")
        if self.gnn_layers not in (1, 3):
            raise ConfigError(f"config key 'gnn_layers': expected 1 or 3, got {self.gnn_layers}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"config key 'mechanism': expected one of {MECHANISMS}, got {self.mechanism!r}")
        for key in ("hidden", "embed", "epochs", "kernel_num"):
            if getattr(self, key) < 1:
                raise ConfigError(f"config key {key!r} must be positive")
        if self.batch_size < 2:
            raise ConfigError("config key 'batch_size' must be at least 2")
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ConfigError("config key 'latent_dim' must be positive")
        for key in ("lr", "alpha_max", "beta_max", "lam"):
            if getattr(self, key) < 0:
                raise ConfigError(f"config key {'lambda' if key == 'lam' else key!r} must be nonnegative")
        for key in ("temp_max", "mmd_sigma"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"config key {key!r} must be positive")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ConfigError(f"config key 'split': fractions must be three nonnegatives summing to 1, got {self.split}")

    @property
    def variant(self) -> GnnVariant:
        return GnnVariant(self.gnn, self.gnn_layers)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha_max, self.beta_max, self.lam, self.epochs)

    @property
    def mmd(self) -> MmdConfig:
        return MmdConfig(self.mmd_sigma, self.kernel_num)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in to_items(self).items())

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SynthConfig:
    latent_dim: int = 4
    obs_dim: int = 20
    n_obs: int = 2000
    n_per_intervention: int = 2000
    edge_prob: float = 0.5
    shift_scale: float = 2.0
    mixing: str = "linear"
    informativeness: float = 0.9
    seed: int = 0
    double_pairs: tuple[tuple[int, int], ...] = ()


def to_items(cfg: TrainConfig) -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(cfg):
        key = "lambda" if f.name == "lam" else f.name
        v = getattr(cfg, f.name)
        if f.name == "edge_mask":
            v = hetnet.format_edge_mask(v)
        elif f.name == "split":
            v = ",".join(repr(float(x)) for x in v)
        elif v is None:
            v = "auto"
        out[key] = str(v)
    return out


def _convert(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in ("latent_dim",):
            return None if raw.lower() in ("auto", "none", "") else int(raw)
        if key in ("gnn_layers", "hidden", "embed", "batch_size", "epochs", "kernel_num", "seed",
                   "obs_dim", "n_obs", "n_per_intervention"):
            return int(raw)
        if key in ("lr", "alpha_max", "beta_max", "lambda", "temp_max", "mmd_sigma", "edge_prob",
                   "shift_scale", "informativeness"):
            return float(raw)
        if key == "edge_mask":
            return hetnet.parse_edge_mask(raw)
        if key == "split":
            return tuple(float(x) for x in raw.split(","))
        if key == "double_pairs":
            pairs = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if chunk:
                    a, b = chunk.split("+")
                    pairs.append((int(a), int(b)))
            return tuple(pairs)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} ({exc})") from None


def parse_lines(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {s!r}")
        key, val = (x.strip() for x in s.split("=", 1))
        if key not in TRAIN_KEYS and key not in SYNTH_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, val)
    return values


def parse_overrides(pairs) -> dict[str, object]:
    values = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = (x.strip() for x in item.split("=", 1))
        if key not in TRAIN_KEYS and key not in SYNTH_KEYS:
            raise ConfigError(f"unknown config key {key!r} in --set")
        values[key] = _convert(key, val)
    return values


def load_values(path=None, overrides=None) -> dict[str, object]:
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        values.update(parse_lines(text, str(p)))
    values.update(overrides or {})
    if os.environ.get(SEED_ENV):
        values["seed"] = _convert("seed", os.environ[SEED_ENV])
    return values


def train_config(values: dict) -> TrainConfig:
    kw = {("lam" if k == "lambda" else k): v for k, v in values.items() if k in TRAIN_KEYS}
    return TrainConfig(**kw)


def synth_config(values: dict) -> SynthConfig:
    kw = {k: v for k, v in values.items() if k in SYNTH_KEYS or k in ("latent_dim", "seed")}
    if kw.get("latent_dim", 0) is None:
        raise ConfigError("config key 'latent_dim' must be an integer for synth")
    cfg = SynthConfig(**kw)
    if cfg.mixing not in ("linear", "poly2", "mlp"):
        raise ConfigError(f"config key 'mixing': unknown kind {cfg.mixing!r}")
    return cfg


def config_from_text(text: str) -> TrainConfig:
    return train_config(parse_lines(text))


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True)
