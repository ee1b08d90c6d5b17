"""Dataset splits, regime batching, Adam, the epoch loop and checkpoints."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .causal import temperature_schedule
from .diffcore import ComputationRecord, backward
from .errors import ConfigError, CorruptCheckpointError, DataError, NumericError
from .hetnet import HeteroGraph
from .model import GraceModel
from .objective import BREAKDOWN_COLUMNS
from .scmsynth import RegimeDataset

log = logging.getLogger(__name__)

CKPT_MAGIC = b"GRACECKPT"
CKPT_VERSION = 1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


# ---------------------------------------------------------------- splits

def _round(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def split_dataset(ds: RegimeDataset, fractions=(0.7, 0.1, 0.2), seed=0, reserve=()):
    """Per-regime stratified (train, val, test) split. Regimes whose label is in
    ``reserve`` go entirely to test."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three numbers summing to 1, got {fractions}")
    reserve = set(reserve)
    rng = np.random.default_rng(seed)

    def cut(n, label):
        n_tr = _round(fractions[0] * n)
        n_va = _round(fractions[1] * n)
        n_te = n - n_tr - n_va
        for size, frac, name in ((n_tr, fractions[0], "train"), (n_va, fractions[1], "val"), (n_te, fractions[2], "test")):
            if frac > 0 and size < 1:
                raise DataError(f"regime {label!r} with {n} rows is too small for a {name} split")
        perm = rng.permutation(n)
        return perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]

    def take(M, idx):
        return None if M is None else M[idx]

    parts = [dict(X0=None, U0=None, Xk=[], Uk=[], labels=[]) for _ in range(3)]
    idx0 = cut(len(ds.X0), "ctrl")
    for part, idx in zip(parts, idx0):
        part["X0"], part["U0"] = ds.X0[idx], take(ds.U0, idx)
    for k, (lab, X) in enumerate(zip(ds.labels, ds.Xk)):
        U = ds.Uk[k] if ds.Uk is not None else None
        if lab in reserve:
            parts[2]["labels"].append(lab)
            parts[2]["Xk"].append(X)
            parts[2]["Uk"].append(U)
            continue
        for part, idx in zip(parts, cut(len(X), lab)):
            part["labels"].append(lab)
            part["Xk"].append(X[idx])
            part["Uk"].append(take(U, idx))
    out = []
    for part in parts:
        Uk = part["Uk"] if ds.Uk is not None else None
        out.append(RegimeDataset(part["X0"], part["Xk"], part["labels"], part["U0"], Uk, list(ds.feature_names)))
    return tuple(out)


def single_labels(ds: RegimeDataset) -> list[str]:
    return [lab for lab in ds.labels if "+" not in lab]


# ---------------------------------------------------------------- batches

@dataclass(frozen=True)
class Batch:
    obs_idx: np.ndarray
    regime: int | None = None        # index into the training intervention vocabulary
    int_idx: np.ndarray | None = None
    label: str | None = None


def make_batches(train: RegimeDataset, batch_size: int, rng, vocabulary=None) -> list[Batch]:
    """One epoch of batches: observational-only batches plus, per regime,
    single-label interventional batches each paired with an equal-size
    observational batch. Order is shuffled."""
    if batch_size < 2:
        raise ConfigError("batch_size must be at least 2")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    vocab = list(vocabulary) if vocabulary is not None else single_labels(train)
    n0 = len(train.X0)
    batches: list[Batch] = []
    perm = rng.permutation(n0)
    for s in range(0, n0, batch_size):
        batches.append(Batch(perm[s:s + batch_size]))
    for lab, X in zip(train.labels, train.Xk):
        if "+" in lab:
            continue
        k = vocab.index(lab)
        perm = rng.permutation(len(X))
        for s in range(0, len(X), batch_size):
            idx = perm[s:s + batch_size]
            src = rng.choice(n0, size=len(idx), replace=len(idx) > n0)
            batches.append(Batch(src, k, idx, lab))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


# ---------------------------------------------------------------- optimiser

@dataclass
class AdamState:
    """First/second moment estimates, stored flat in sorted-name order."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        n = sum(np.size(v) for v in params.values())
        return cls(np.zeros(n), np.zeros(n), 0)

    def unflatten(self, params, which: str) -> dict[str, np.ndarray]:
        return _unflatten(getattr(self, which), params)


def _flatten(d: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(d[k]) for k in sorted(d)])


def _unflatten(flat: np.ndarray, like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out, off = {}, 0
    for k in sorted(like):
        n = np.size(like[k])
        out[k] = flat[off:off + n].reshape(np.shape(like[k]))
        off += n
    return out


def adam_update(params, grads, state: AdamState, lr: float):
    b1, b2 = ADAM_BETAS
    step = state.step + 1
    g = _flatten(grads)
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * g * g
    upd = lr * (m / (1.0 - b1 ** step)) / (np.sqrt(v / (1.0 - b2 ** step)) + ADAM_EPS)
    new_p = _unflatten(_flatten(params) - upd, params)
    return new_p, AdamState(m, v, step)


# ---------------------------------------------------------------- training

@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int                      # next epoch to run
    rng_state: dict
    config_hash: str
    grad_seen: dict[str, bool] = field(default_factory=dict, compare=False)


def initial_state(model: GraceModel) -> TrainState:
    P = model.init_params()
    rng = np.random.default_rng(model.cfg.seed)
    return TrainState(P, AdamState.zeros_like(P), 0, rng.bit_generator.state, model.cfg.hash())


def _rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def train_step(model: GraceModel, params, adam: AdamState, x_obs, interventional, epoch, t, noise, lr):
    with ComputationRecord() as rec:
        leaves = {k: rec.leaf(v) for k, v in params.items()}
        loss, breakdown = model.batch_loss(leaves, x_obs, interventional, epoch, t, noise)
    for key in ("recon", "kl", "mmd", "l1", "total"):
        if not np.isfinite(breakdown[key]):
            raise NumericError(f"epoch {epoch}: non-finite loss term {key!r} = {breakdown[key]}")
    g = backward(loss)
    grads = {k: g[leaves[k].node_id].data for k in params}
    new_p, new_adam = adam_update(params, grads, adam, lr)
    return new_p, new_adam, breakdown, grads


def train_epoch(model: GraceModel, state: TrainState, train: RegimeDataset, vocabulary):
    cfg = model.cfg
    epoch = state.epoch
    rng = _rng_from_state(state.rng_state)
    t = float(temperature_schedule(epoch, cfg.epochs, cfg.temp_max))
    batches = make_batches(train, cfg.batch_size, rng, vocabulary)
    params, adam = state.params, state.adam
    sums = dict.fromkeys(("recon", "kl", "mmd", "l1", "total"), 0.0)
    n_batches = n_paired = 0
    alpha = beta = 0.0
    seen = {k: False for k in params}
    for b in batches:
        x_obs = train.X0[b.obs_idx]
        inter = []
        if b.regime is not None:
            inter.append((b.regime, train.Xk[train.labels.index(b.label)][b.int_idx]))
        noise = rng.standard_normal((len(x_obs), model.p))
        params, adam, bd, grads = train_step(model, params, adam, x_obs, inter, epoch, t, noise, cfg.lr)
        for k, g in grads.items():
            if not seen[k] and np.any(g != 0):
                seen[k] = True
        n_batches += 1
        for key in ("recon", "kl", "l1", "total"):
            sums[key] += bd[key]
        if inter:
            n_paired += 1
            sums["mmd"] += bd["mmd"]
        alpha, beta = bd["alpha"], bd["beta"]
    row = {
        "epoch": epoch,
        "recon": sums["recon"] / n_batches,
        "kl": sums["kl"] / n_batches,
        "mmd": sums["mmd"] / n_paired if n_paired else 0.0,
        "l1": sums["l1"] / n_batches,
        "alpha": alpha, "beta": beta, "temp": t,
        "total": sums["total"] / n_batches,
    }
    new_state = TrainState(params, adam, epoch + 1, rng.bit_generator.state, state.config_hash, seen)
    return new_state, row


def fit(model: GraceModel, train: RegimeDataset, vocabulary, state: TrainState | None = None,
        stop_epoch: int | None = None, log_rows: list | None = None, progress=None):
    """Run epochs from ``state.epoch`` up to ``stop_epoch`` (default: all)."""
    state = initial_state(model) if state is None else state
    if state.config_hash != model.cfg.hash():
        raise ConfigError("checkpoint was written under a different configuration")
    stop = model.cfg.epochs if stop_epoch is None else min(stop_epoch, model.cfg.epochs)
    rows = [] if log_rows is None else log_rows
    while state.epoch < stop:
        state, row = train_epoch(model, state, train, vocabulary)
        rows.append(row)
        if progress:
            progress(row)
    return state, rows


def write_log(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BREAKDOWN_COLUMNS)
        for r in rows:
            w.writerow([r["epoch"]] + [repr(float(r[c])) for c in BREAKDOWN_COLUMNS[1:]])


def read_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]


# ---------------------------------------------------------------- checkpoints

def _tensor_table(state: TrainState):
    table = []
    moments = {"m": state.adam.unflatten(state.params, "m"), "v": state.adam.unflatten(state.params, "v")}
    for prefix, src in (("P", state.params), ("m", moments["m"]), ("v", moments["v"])):
        for k in sorted(src):
            table.append((f"{prefix}/{k}", np.ascontiguousarray(src[k], dtype="<f8")))
    return table


def save_checkpoint(state: TrainState, path) -> None:
    table = _tensor_table(state)
    payload = b"".join(a.tobytes() for _, a in table)
    entries, off = [], 0
    for name, a in table:
        entries.append([name, list(a.shape), off, a.nbytes])
        off += a.nbytes
    header = {
        "version": CKPT_VERSION, "epoch": state.epoch, "step": state.adam.step,
        "config_hash": state.config_hash, "rng_state": state.rng_state, "tensors": entries,
        "payload_bytes": len(payload), "sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CKPT_MAGIC + b" " + str(CKPT_VERSION).encode() + b"\n")
        fh.write(blob + b"\n")
        fh.write(payload)
    tmp.replace(path)


def load_checkpoint(path, expected_hash: str | None = None) -> TrainState:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptCheckpointError(f"{path}: cannot read checkpoint ({exc})") from None
    first = raw.find(b"\n")
    if first < 0 or not raw.startswith(CKPT_MAGIC):
        raise CorruptCheckpointError(f"{path}: not a checkpoint file")
    try:
        version = int(raw[len(CKPT_MAGIC):first].strip())
    except ValueError:
        raise CorruptCheckpointError(f"{path}: unreadable version header") from None
    if version != CKPT_VERSION:
        raise CorruptCheckpointError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    second = raw.find(b"\n", first + 1)
    if second < 0:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[first + 1:second].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptCheckpointError(f"{path}: corrupt header") from None
    payload = raw[second + 1:]
    if len(payload) != header["payload_bytes"] or hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CorruptCheckpointError(f"{path}: payload truncated or corrupted")
    if expected_hash is not None and header["config_hash"] != expected_hash:
        raise ConfigError(f"{path}: config hash {header['config_hash']} does not match {expected_hash}")
    groups: dict[str, dict[str, np.ndarray]] = {"P": {}, "m": {}, "v": {}}
    for name, shape, off, nbytes in header["tensors"]:
        prefix, key = name.split("/", 1)
        arr = np.frombuffer(payload[off:off + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        groups[prefix][key] = arr
    if set(groups["m"]) != set(groups["P"]) or set(groups["v"]) != set(groups["P"]):
        raise CorruptCheckpointError(f"{path}: optimiser moments do not match parameters")
    return TrainState(groups["P"], AdamState(_flatten(groups["m"]), _flatten(groups["v"]), header["step"]),
                      header["epoch"], header["rng_state"], header["config_hash"])
