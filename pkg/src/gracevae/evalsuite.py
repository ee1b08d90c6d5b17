"""Metrics, oracle scoring against synthetic ground truth, and exports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, DimensionError, ParseError
from .objective import MmdConfig, mmd2

N_DEG = 20
DEFAULT_TAU = 0.1
METRIC_COLUMNS = ("intervention", "n_real", "n_gen", "r2", "rmse", "mmd")
SAMPLE_SOURCES = ("actual", "generated", "ctrl")


# ---------------------------------------------------------------- DEGs and profiles

@dataclass(frozen=True)
class DegSet:
    label: str
    indices: tuple[int, ...]
    scores: tuple[float, ...]


def select_degs(D0, Dk, n_deg: int = N_DEG, label: str = "") -> DegSet:
    """Top features by absolute standardized mean difference; ties go to the lower index."""
    D0, Dk = np.asarray(D0, float), np.asarray(Dk, float)
    if D0.shape[1] != Dk.shape[1]:
        raise DimensionError(f"select_degs: {D0.shape[1]} vs {Dk.shape[1]} columns")
    if not 1 <= n_deg <= D0.shape[1]:
        raise ContractError(f"n_deg must be in [1, {D0.shape[1]}], got {n_deg}")
    n0, nk = len(D0), len(Dk)
    pooled = np.sqrt(((n0 - 1) * D0.var(0, ddof=1) + (nk - 1) * Dk.var(0, ddof=1)) / max(n0 + nk - 2, 1))
    score = np.abs(Dk.mean(0) - D0.mean(0)) / (pooled + 1e-8)
    order = np.lexsort((np.arange(len(score)), -score))[:n_deg]
    return DegSet(label, tuple(int(i) for i in order), tuple(float(score[i]) for i in order))


@dataclass(frozen=True)
class ProfileScore:
    r2: float | None        # None when the real profile has zero variance
    rmse: float

    @property
    def r2_defined(self) -> bool:
        return self.r2 is not None


def profile_metrics(gen, real, degs: DegSet) -> ProfileScore:
    """R^2 and RMSE between mean profiles on the DEG columns."""
    if not degs.indices:
        raise ContractError("profile_metrics needs a nonempty DEG set")
    cols = list(degs.indices)
    mu_hat = np.asarray(gen, float)[:, cols].mean(0)
    mu = np.asarray(real, float)[:, cols].mean(0)
    sse = float(np.sum((mu_hat - mu) ** 2))
    sst = float(np.sum((mu - mu.mean()) ** 2))
    r2 = None if sst == 0.0 else 1.0 - sse / sst
    return ProfileScore(r2, float(np.sqrt(sse / len(cols))))


def mmd_eval(gen, real, degs: DegSet, cfg: MmdConfig = MmdConfig()) -> float:
    cols = list(degs.indices)
    return float(mmd2(np.asarray(gen, float)[:, cols], np.asarray(real, float)[:, cols], cfg).data)


# ---------------------------------------------------------------- latent matching

@dataclass
class MatchResult:
    perm: np.ndarray          # perm[i] = true latent matched to learned column i
    scale: np.ndarray
    offset: np.ndarray
    corr: np.ndarray          # matched |corr| per learned column
    degenerate: tuple[int, ...] = ()

    @property
    def mean_corr(self) -> float:
        return float(self.corr.mean())

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return inv


def abs_corr_matrix(U_hat, U_true) -> tuple[np.ndarray, list[int]]:
    """|Pearson| between every learned and true column; zero-variance columns give 0."""
    A = np.asarray(U_hat, float) - np.mean(U_hat, 0)
    B = np.asarray(U_true, float) - np.mean(U_true, 0)
    sa, sb = np.sqrt((A * A).sum(0)), np.sqrt((B * B).sum(0))
    bad_a = sa == 0
    C = np.abs(A.T @ B) / np.outer(np.where(bad_a, 1.0, sa), np.where(sb == 0, 1.0, sb))
    C[bad_a, :] = 0.0
    C[:, sb == 0] = 0.0
    return np.clip(C, 0.0, 1.0), [int(i) for i in np.flatnonzero(bad_a)]


def match_latents(U_hat, U_true) -> MatchResult:
    U_hat, U_true = np.asarray(U_hat, float), np.asarray(U_true, float)
    if U_hat.shape != U_true.shape:
        raise DimensionError(f"match_latents: shapes {U_hat.shape} and {U_true.shape} differ")
    n, p = U_hat.shape
    if n < 10 * p:
        raise ContractError(f"match_latents needs at least {10 * p} rows, got {n}")
    C, degenerate = abs_corr_matrix(U_hat, U_true)
    rows, cols = linear_sum_assignment(C, maximize=True)
    perm = np.empty(p, dtype=int)
    perm[rows] = cols
    scale, offset = np.zeros(p), np.zeros(p)
    for i in range(p):
        u = U_true[:, perm[i]]
        var = u.var()
        lam = 0.0 if var == 0 else float(np.mean((u - u.mean()) * (U_hat[:, i] - U_hat[:, i].mean())) / var)
        scale[i], offset[i] = lam, float(U_hat[:, i].mean() - lam * u.mean())
    return MatchResult(perm, scale, offset, C[np.arange(p), perm], tuple(degenerate))


def exhaustive_assignment(C) -> tuple[np.ndarray, float]:
    """Brute-force maximum-weight permutation (reference for small p)."""
    from itertools import permutations

    C = np.asarray(C, float)
    best, best_val = None, -np.inf
    for perm in permutations(range(len(C))):
        val = float(C[np.arange(len(C)), perm].sum())
        if val > best_val:
            best, best_val = np.asarray(perm), val
    return best, best_val


# ---------------------------------------------------------------- graph and targets

def matched_graph(M_learned, tau: float, perm) -> np.ndarray:
    """Threshold |M| and relabel learned nodes by their matched true index."""
    M = np.asarray(M_learned, float)
    perm = np.asarray(perm)
    G = np.zeros(M.shape, dtype=int)
    ii, jj = np.nonzero(np.abs(M) > tau)
    G[perm[ii], perm[jj]] = 1
    return G


def shd(G_hat, G_true) -> int:
    """Missing plus extra edges, with a reversed edge counted once."""
    A, B = np.asarray(G_hat, bool), np.asarray(G_true, bool)
    diff = A != B
    reversed_pairs = A & ~B & B.T & ~A.T
    return int(diff.sum() - reversed_pairs.sum())


def shd_matched(M_learned, tau: float, G_true, perm) -> int:
    return shd(matched_graph(M_learned, tau, perm), G_true)


def tau_sweep(M_learned, G_true, perm, taus=None) -> dict[float, int]:
    if taus is None:
        taus = np.round(np.linspace(0.0, 1.0, 21), 10)
    return {float(t): shd_matched(M_learned, float(t), G_true, perm) for t in taus}


def best_tau(sweep: dict[float, int]) -> tuple[float, int]:
    """Smallest SHD; among ties the smallest threshold."""
    tau = min(sweep, key=lambda t: (sweep[t], t))
    return tau, sweep[tau]


def target_accuracy(simplex_vectors, true_targets, perm) -> float:
    """Share of interventions whose matched argmax equals the true target."""
    A = np.atleast_2d(np.asarray(simplex_vectors, float)) if len(simplex_vectors) else np.empty((0, 0))
    if len(A) == 0:
        raise ContractError("target_accuracy needs at least one intervention")
    if len(A) != len(true_targets):
        raise DimensionError(f"{len(A)} codes but {len(true_targets)} true targets")
    perm = np.asarray(perm)
    hits = [perm[int(np.argmax(a))] == t for a, t in zip(A, true_targets)]
    return float(np.mean(hits))


# ---------------------------------------------------------------- exports

def dag_edges(M, tau: float) -> list[tuple[int, int, float]]:
    M = np.asarray(M, float)
    return [(int(i), int(j), round(float(abs(M[i, j])), 4))
            for i in range(M.shape[0]) for j in range(M.shape[1]) if abs(M[i, j]) > tau]


def export_dag(M, tau: float, labels, fmt: str = "dot") -> str:
    M = np.asarray(M, float)
    if len(labels) != M.shape[0]:
        raise DimensionError(f"export_dag: {len(labels)} labels for {M.shape[0]} nodes")
    edges = dag_edges(M, tau)
    if fmt == "json":
        obj = {"nodes": list(labels),
               "edges": [{"source": labels[i], "target": labels[j], "weight": f"{w:.4f}"} for i, j, w in edges]}
        return json.dumps(obj, indent=1) + "\n"
    if fmt != "dot":
        raise ContractError(f"unknown DAG format {fmt!r}; expected 'dot' or 'json'")
    lines = ["digraph latent {"]
    lines += [f'  "{lab}";' for lab in labels]
    lines += [f'  "{labels[i]}" -> "{labels[j]}" [label="{w:.4f}", weight={w:.4f}];' for i, j, w in edges]
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_dag_json(text: str) -> list[tuple[str, str, str]]:
    return [(e["source"], e["target"], e["weight"]) for e in json.loads(text)["edges"]]


def parse_dag_dot(text: str) -> list[tuple[str, str, str]]:
    out = []
    for line in text.splitlines():
        if "->" in line:
            left, right = line.split("->")
            tgt, attrs = right.split("[", 1)
            w = attrs.split('label="', 1)[1].split('"', 1)[0]
            out.append((left.strip().strip('"'), tgt.strip().strip('"'), w))
    return out


SAMPLE_HEADER_PREFIX = ("source", "intervention")


def export_samples(groups, feature_names, path) -> int:
    """Rows of (source, intervention, features...) for each (source, label, matrix) group.

    Header order is fixed: ``source,intervention`` then the feature names.
    """
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([*SAMPLE_HEADER_PREFIX, *feature_names]) + "\n")
        for source, label, X in groups:
            if source not in SAMPLE_SOURCES:
                raise ContractError(f"sample source must be one of {SAMPLE_SOURCES}, got {source!r}")
            for row in np.asarray(X, float):
                fh.write(f"{source},{label}," + ",".join(format(float(v), ".17g") for v in row) + "\n")
                n += 1
    return n


def read_samples(path):
    """Inverse of export_samples: list of (source, label, matrix) in file order."""
    path = Path(path)
    out: list[tuple[str, str, list]] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if tuple(header[:2]) != SAMPLE_HEADER_PREFIX:
            raise ParseError("header must start with 'source,intervention'", path, 1)
        for lineno, line in enumerate(fh, start=2):
            cols = line.rstrip("\n").split(",")
            if len(cols) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(cols)}", path, lineno)
            key = (cols[0], cols[1])
            if not out or (out[-1][0], out[-1][1]) != key:
                out.append((cols[0], cols[1], []))
            out[-1][2].append([float(c) for c in cols[2:]])
    return [(s, lab, np.asarray(rows)) for s, lab, rows in out], header[2:]


def _fmt(v) -> str:
    return "error" if v is None else repr(float(v))


def write_metrics(rows, path) -> None:
    """Rows carry the METRIC_COLUMNS keys; an undefined R^2 is written as ``error``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([r["intervention"], r["n_real"], r["n_gen"], _fmt(r["r2"]), _fmt(r["rmse"]), _fmt(r["mmd"])])


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({
            "intervention": r["intervention"], "n_real": int(r["n_real"]), "n_gen": int(r["n_gen"]),
            **{k: (None if r[k] == "error" else float(r[k])) for k in ("r2", "rmse", "mmd")},
        })
    return out


def oracle_report(match: MatchResult, sweep: dict[float, int], accuracy: float | None) -> dict:
    tau, best = best_tau(sweep)
    return {
        "perm": match.perm.tolist(), "scale": match.scale.tolist(), "offset": match.offset.tolist(),
        "matched_abs_corr": match.corr.tolist(), "mean_abs_corr": match.mean_corr,
        "degenerate_columns": list(match.degenerate),
        "shd_per_tau": {f"{t:g}": s for t, s in sweep.items()},
        "best_tau": tau, "best_shd": best, "target_accuracy": accuracy,
    }
