"""Synthetic ground truth: linear Gaussian latent SCMs under shift interventions.

Latents are indexed topologically (G strictly upper triangular, G[i, j] = 1
means i -> j). A soft intervention on target i adds a constant shift to the
mechanism of i only. Observations are a mixing of the latents.

The assumption checkers at the bottom are statistical / grid-based evidence,
not proofs.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import hetnet
from .errors import ConstructionError, ContractError, DataError, ParseError, UnsupportedError

log = logging.getLogger(__name__)

GENERATOR_VERSION = "1"
MIXING_KINDS = ("linear", "poly2", "mlp")
WEIGHT_RANGE = (0.5, 1.5)
NOISE_RANGE = (0.5, 1.5)


# ---------------------------------------------------------------- types

@dataclass
class MixingSpec:
    kind: str
    p: int
    d: int
    coeffs: dict[str, np.ndarray]
    seed: int | None = None

    def monomials(self, U: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return U
        iu = np.triu_indices(self.p)
        quad = (U[:, :, None] * U[:, None, :])[:, iu[0], iu[1]]
        return np.concatenate([U, quad], axis=1)

    def __call__(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=np.float64)
        if self.kind == "mlp":
            h = U @ self.coeffs["W1"] + self.coeffs["b1"]
            h = np.where(h > 0, h, 0.2 * h)
            return h @ self.coeffs["W2"]
        return self.monomials(U) @ self.coeffs["H"]

    def loadings(self) -> np.ndarray:
        """p x d matrix of first-order loadings (latent -> feature)."""
        if self.kind == "mlp":
            raise UnsupportedError("loadings are defined for linear and poly2 mixings only")
        return self.coeffs["H"][: self.p]

    def to_json(self) -> dict:
        return {
            "kind": self.kind, "p": self.p, "d": self.d, "seed": self.seed,
            "coeffs": {k: v.tolist() for k, v in self.coeffs.items()},
        }

    @classmethod
    def from_json(cls, obj) -> "MixingSpec":
        return cls(obj["kind"], obj["p"], obj["d"],
                   {k: np.asarray(v, dtype=np.float64) for k, v in obj["coeffs"].items()},
                   obj.get("seed"))


@dataclass
class GroundTruth:
    p: int
    G: np.ndarray
    W: np.ndarray
    noise_scales: np.ndarray
    interventions: list[tuple[int, float]]
    mixing: MixingSpec
    seed: int | None = None
    names: list[str] = field(default_factory=list)
    mechanism: str = "linear"

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=int)
        self.W = np.asarray(self.W, dtype=np.float64)
        self.noise_scales = np.asarray(self.noise_scales, dtype=np.float64)
        if np.any(np.tril(self.G) != 0):
            raise ConstructionError("G must be strictly upper triangular")
        if np.any((self.G == 0) & (self.W != 0)):
            raise ConstructionError("W has weight outside the support of G")
        if not self.names:
            self.names = [f"I{k}" for k in range(len(self.interventions))]

    def parents(self, j: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.G[:, j])]

    def children(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.G[i])]

    def descendants(self, i: int) -> set[int]:
        """Strict descendants of i."""
        out, stack = set(), self.children(i)
        while stack:
            j = stack.pop()
            if j not in out:
                out.add(j)
                stack.extend(self.children(j))
        return out

    def total_effects(self) -> np.ndarray:
        """T[i, j] = effect of a unit shift at i on the mean of U_j; equals (I - W)^-1."""
        return np.linalg.inv(np.eye(self.p) - self.W)

    def latent_covariance(self) -> np.ndarray:
        T = self.total_effects()
        return T.T @ np.diag(self.noise_scales ** 2) @ T

    def target(self, k: int) -> int:
        return self.interventions[k][0]

    def to_json(self) -> dict:
        return {
            "p": self.p, "G": self.G.tolist(), "W": self.W.tolist(),
            "noise_scales": self.noise_scales.tolist(),
            "interventions": [{"name": n, "target": int(t), "shift": float(s)}
                              for n, (t, s) in zip(self.names, self.interventions)],
            "mixing": self.mixing.to_json(), "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "GroundTruth":
        ivs = [(int(x["target"]), float(x["shift"])) for x in obj["interventions"]]
        return cls(obj["p"], np.asarray(obj["G"]), np.asarray(obj["W"]),
                   np.asarray(obj["noise_scales"]), ivs, MixingSpec.from_json(obj["mixing"]),
                   obj.get("seed"), [x["name"] for x in obj["interventions"]])


@dataclass
class RegimeDataset:
    """Observational matrix plus one matrix per labelled interventional regime.

    Labels are ``ctrl`` (never stored in ``labels``) or intervention names
    joined by ``+``. Latent matrices are kept for oracle scoring only.
    """

    X0: np.ndarray
    Xk: list[np.ndarray]
    labels: list[str]
    U0: np.ndarray | None = None
    Uk: list[np.ndarray] | None = None
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        d = self.X0.shape[1]
        for lab, x in zip(self.labels, self.Xk):
            if x.shape[1] != d:
                raise DataError(f"regime {lab!r} has {x.shape[1]} columns, expected {d}")
        if len(self.labels) != len(self.Xk):
            raise DataError("one label per interventional matrix is required")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(d)]

    @property
    def d(self) -> int:
        return self.X0.shape[1]

    @property
    def vocabulary(self) -> list[str]:
        """Single-intervention names in order of first appearance."""
        seen: list[str] = []
        for lab in self.labels:
            for part in lab.split("+"):
                if part not in seen:
                    seen.append(part)
        return seen

    def regime(self, label: str) -> np.ndarray:
        if label == "ctrl":
            return self.X0
        return self.Xk[self.labels.index(label)]

    def latent(self, label: str) -> np.ndarray | None:
        if label == "ctrl":
            return self.U0
        if self.Uk is None:
            return None
        return self.Uk[self.labels.index(label)]


# ---------------------------------------------------------------- generators

def sample_dag(p: int, edge_prob: float, seed) -> np.ndarray:
    if p < 1 or not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"need p >= 1 and edge_prob in [0, 1], got {p}, {edge_prob}")
    rng = np.random.default_rng(seed)
    draws = rng.random((p, p)) < edge_prob
    return np.triu(draws, 1).astype(int)


def sample_weights(G: np.ndarray, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo, hi = WEIGHT_RANGE
    mag = rng.uniform(lo, hi, G.shape)
    sign = rng.choice([-1.0, 1.0], G.shape)
    return np.where(G != 0, mag * sign, 0.0)


def _full_row_rank(A: np.ndarray, p: int) -> bool:
    s = np.linalg.svd(A, compute_uv=False)
    if s.size < p or s[0] == 0:
        return False
    return bool(s[p - 1] / s[0] > 1e-8)


def make_mixing(p: int, d: int, kind: str = "linear", seed=None, coeffs=None,
                max_tries: int = 10) -> MixingSpec:
    """Random mixing whose first-order coefficient block has full row rank p."""
    if kind not in MIXING_KINDS:
        raise ValueError(f"mixing kind must be one of {MIXING_KINDS}, got {kind!r}")
    if d < p:
        raise ConstructionError(f"observed dimension d={d} is smaller than p={p}")
    if coeffs is not None:
        spec = MixingSpec(kind, p, d, {k: np.asarray(v, dtype=np.float64) for k, v in coeffs.items()},
                          int(seed) if isinstance(seed, (int, np.integer)) else None)
        block = spec.coeffs["W1"] if kind == "mlp" else spec.coeffs["H"][:p]
        if not _full_row_rank(block, p):
            raise ConstructionError("mixing coefficients are rank deficient")
        return spec
    rng = np.random.default_rng(seed)
    n_mono = p + p * (p + 1) // 2
    for _ in range(max_tries):
        if kind == "linear":
            c = {"H": rng.standard_normal((p, d))}
            block = c["H"]
        elif kind == "poly2":
            c = {"H": rng.standard_normal((n_mono, d))}
            block = c["H"][:p]
        else:
            c = {"W1": rng.standard_normal((p, d)), "b1": 0.1 * rng.standard_normal(d),
                 "W2": rng.standard_normal((d, d)) / np.sqrt(d)}
            block = c["W1"]
        if _full_row_rank(block, p):
            return MixingSpec(kind, p, d, c, int(seed) if isinstance(seed, (int, np.integer)) else None)
    raise ConstructionError(f"could not draw a full-row-rank {kind} mixing in {max_tries} tries")


def chain_ground_truth(weights, shift: float = 1.0, noise_scales=None) -> GroundTruth:
    """Chain 0 -> 1 -> ... with the given edge weights, identity mixing and one
    shift intervention on the root."""
    w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    p = len(w) + 1
    G = np.eye(p, k=1, dtype=int)
    W = np.diag(w, k=1)
    noise = np.ones(p) if noise_scales is None else np.asarray(noise_scales, dtype=np.float64)
    mixing = make_mixing(p, p, "linear", coeffs={"H": np.eye(p)})
    return GroundTruth(p, G, W, noise, [(0, float(shift))], mixing)


def ancestral_sample(gt: GroundTruth, n: int, intervention=None, seed=None, noise=None):
    """Sample (U, X). ``intervention`` is an index into gt.interventions, a
    tuple of indices applied jointly, or None for the observational regime."""
    p = gt.p
    if noise is None:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((n, p))
    eps = noise * gt.noise_scales
    shift = np.zeros(p)
    if intervention is not None:
        ks = (intervention,) if np.isscalar(intervention) else tuple(intervention)
        for k in ks:
            if not 0 <= k < len(gt.interventions):
                raise ContractError(f"intervention index {k} out of range")
            t, delta = gt.interventions[k]
            shift[t] += delta
    U = np.zeros((noise.shape[0], p))
    for i in range(p):
        U[:, i] = U[:, :i] @ gt.W[:i, i] + eps[:, i] + shift[i]
    return U, gt.mixing(U)


def make_context_network(gt: GroundTruth, mixing: MixingSpec, informativeness: float,
                         seed=None, top_q: float = 0.25) -> hetnet.HeteroGraph:
    """One H node per latent. X-H edges link each feature to latents whose
    |loading| is in that feature's top-q quantile; X-X edges join features
    sharing a top-loading latent; H-H edges mirror the latent DAG skeleton.
    Each edge is independently replaced by a uniform random edge of the same
    kind with probability 1 - informativeness."""
    if not 0.0 <= informativeness <= 1.0:
        raise ValueError("informativeness must lie in [0, 1]")
    L = np.abs(mixing.loadings())
    p, d = L.shape
    rng = np.random.default_rng(seed)
    top = np.argmax(L, axis=0)
    xh, xx = set(), set()
    for v in range(d):
        cut = np.quantile(L[:, v], 1.0 - top_q)
        for lat in np.flatnonzero(L[:, v] >= cut):
            if L[lat, v] > 0:
                xh.add((v, d + int(lat)))
    for lat in range(p):
        feats = np.flatnonzero((top == lat) & (L[lat] > 0))
        xx.update((int(a), int(b)) for a, b in itertools.combinations(feats, 2))
    hh = {(d + i, d + j) for i, j in zip(*np.nonzero(gt.G))}

    def rewire(edges, draw):
        edges = sorted(edges)
        keep = set(edges)
        out = []
        for e in edges:
            if rng.random() < informativeness:
                out.append(e)
                continue
            keep.discard(e)
            for _ in range(1000):
                u, v = draw()
                c = (min(u, v), max(u, v))
                if u != v and c not in keep:
                    break
            else:
                c = e
            keep.add(c)
            out.append(c)
        return keep

    xx = rewire(xx, lambda: tuple(rng.integers(0, d, 2)))
    xh = rewire(xh, lambda: (int(rng.integers(0, d)), d + int(rng.integers(0, p))))
    hh = rewire(hh, lambda: tuple(d + rng.integers(0, p, 2))) if p > 1 else hh
    return hetnet.make_graph(
        d, p, xx, xh, hh,
        x_names=tuple(f"x{j}" for j in range(d)), h_names=tuple(f"h{i}" for i in range(p)),
    )


def generate_benchmark(p: int, d: int, n_obs: int, n_per_intervention: int, edge_prob: float,
                       shift_scale: float, mixing_kind: str = "linear",
                       informativeness: float = 1.0, seed: int = 0, double_pairs=()):
    """Ground truth, data and context network; one intervention per latent.

    ``double_pairs`` adds regimes intervening jointly on two single
    interventions (indices into the single list), labelled ``Ia+Ib``.
    """
    if min(p, d, n_obs, n_per_intervention) <= 0:
        raise ValueError("all counts must be positive")
    ss = np.random.SeedSequence(seed)
    s_dag, s_w, s_noise, s_shift, s_mix, s_ctx, s_data = ss.spawn(7)
    G = sample_dag(p, edge_prob, s_dag)
    W = sample_weights(G, s_w)
    noise_scales = np.random.default_rng(s_noise).uniform(*NOISE_RANGE, p)
    rng = np.random.default_rng(s_shift)
    signs = rng.choice([-1.0, 1.0], p)
    mags = 1.0 + np.abs(rng.standard_normal(p))
    interventions = [(i, float(shift_scale * signs[i] * mags[i])) for i in range(p)]
    mixing = make_mixing(p, d, mixing_kind, s_mix)
    gt = GroundTruth(p, G, W, noise_scales, interventions, mixing, seed)
    graph = (make_context_network(gt, mixing, informativeness, s_ctx)
             if mixing_kind != "mlp" else hetnet.make_graph(d, p))
    regimes = [(k,) for k in range(p)] + [tuple(pair) for pair in double_pairs]
    data_seeds = s_data.spawn(1 + len(regimes))
    U0, X0 = ancestral_sample(gt, n_obs, None, data_seeds[0])
    Xk, Uk, labels = [], [], []
    for ks, sd in zip(regimes, data_seeds[1:]):
        U, X = ancestral_sample(gt, n_per_intervention, ks, sd)
        Xk.append(X)
        Uk.append(U)
        labels.append("+".join(gt.names[k] for k in ks))
    ds = RegimeDataset(X0, Xk, labels, U0, Uk, [f"x{j}" for j in range(d)])
    return gt, ds, graph


# ---------------------------------------------------------------- bundle I/O

def write_matrix_csv(path, X: np.ndarray, label: str, feature_names, start_id: int = 0) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["sample_id", "intervention", *feature_names]) + "\n")
        for r, row in enumerate(X):
            vals = ",".join(format(float(v), ".17g") for v in row)
            fh.write(f"s{start_id + r},{label},{vals}\n")


def read_matrix_csv(path):
    """Returns (label -> matrix dict in file order, feature names)."""
    path = Path(path)
    groups: dict[str, list[list[float]]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:2] != ["sample_id", "intervention"]:
            raise ParseError("header must start with 'sample_id,intervention'", path, 1)
        names = header[2:]
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split(",")
            if len(cols) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(cols)}", path, lineno)
            try:
                vals = [float(c) for c in cols[2:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", path, lineno) from None
            groups.setdefault(cols[1], []).append(vals)
    return {k: np.asarray(v, dtype=np.float64).reshape(-1, len(names)) for k, v in groups.items()}, names


def save_bundle(out_dir, gt: GroundTruth, ds: RegimeDataset, graph: hetnet.HeteroGraph,
                extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ground_truth.json").write_text(json.dumps(gt.to_json(), indent=1), encoding="utf-8")
    names = ds.feature_names
    write_matrix_csv(out / "data_obs.csv", ds.X0, "ctrl", names)
    latent_names = [f"u{i}" for i in range(gt.p)]
    if ds.U0 is not None:
        write_matrix_csv(out / "latent_obs.csv", ds.U0, "ctrl", latent_names)
    offset = len(ds.X0)
    for k, (lab, X) in enumerate(zip(ds.labels, ds.Xk)):
        write_matrix_csv(out / f"data_int_{k}.csv", X, lab, names, offset)
        if ds.Uk is not None:
            write_matrix_csv(out / f"latent_int_{k}.csv", ds.Uk[k], lab, latent_names, offset)
        offset += len(X)
    hetnet.write_edge_list(graph, out / "context_edges.tsv")
    hetnet.write_vocabulary(graph.x_names or names, out / "x_nodes.txt")
    hetnet.write_vocabulary(graph.h_names or [f"h{i}" for i in range(graph.m)], out / "h_nodes.txt")
    manifest = {
        "generator_version": GENERATOR_VERSION, "p": gt.p, "d": ds.d,
        "n_obs": int(len(ds.X0)), "regimes": {lab: int(len(X)) for lab, X in zip(ds.labels, ds.Xk)},
        "n_context_edges": dict(zip(hetnet.EDGE_KINDS, graph.counts())), "seed": gt.seed,
    }
    if extra:
        manifest["generator_args"] = extra
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return out


def load_bundle(bundle_dir):
    b = Path(bundle_dir)
    if not (b / "manifest.json").exists():
        raise DataError(f"{b}: not a benchmark bundle (manifest.json missing)")
    manifest = json.loads((b / "manifest.json").read_text(encoding="utf-8"))
    if str(manifest.get("generator_version")) != GENERATOR_VERSION:
        raise DataError(f"{b / 'manifest.json'}: unsupported generator_version {manifest.get('generator_version')}")
    gt = None
    if (b / "ground_truth.json").exists():
        gt = GroundTruth.from_json(json.loads((b / "ground_truth.json").read_text(encoding="utf-8")))
    obs, names = read_matrix_csv(b / "data_obs.csv")
    X0 = obs["ctrl"]
    U0 = read_matrix_csv(b / "latent_obs.csv")[0]["ctrl"] if (b / "latent_obs.csv").exists() else None
    Xk, Uk, labels = [], [], []
    k = 0
    while (b / f"data_int_{k}.csv").exists():
        groups, _ = read_matrix_csv(b / f"data_int_{k}.csv")
        for lab, X in groups.items():
            labels.append(lab)
            Xk.append(X)
        lat = b / f"latent_int_{k}.csv"
        if lat.exists():
            Uk.extend(read_matrix_csv(lat)[0].values())
        k += 1
    ds = RegimeDataset(X0, Xk, labels, U0, Uk if len(Uk) == len(Xk) else None, names)
    x_vocab = hetnet.read_vocabulary(b / "x_nodes.txt") if (b / "x_nodes.txt").exists() else names
    h_vocab = hetnet.read_vocabulary(b / "h_nodes.txt") if (b / "h_nodes.txt").exists() else []
    graph = hetnet.load_edge_lists(b / "context_edges.tsv", x_vocab, h_vocab)
    return gt, ds, graph


# ---------------------------------------------------------------- assumption checks

def _median_bandwidth(z: np.ndarray) -> float:
    sub = z[: min(len(z), 500)]
    d2 = (sub[:, None] - sub[None, :]) ** 2
    med = np.median(d2[np.triu_indices(len(sub), 1)])
    return float(med) if med > 0 else 1.0


EXACT_KERNEL_MAX = 4000
FOURIER_FEATURES = 256


def mmd_permutation_test(a: np.ndarray, b: np.ndarray, n_perm: int = 200, seed=None) -> tuple[float, float]:
    """Two-sample permutation test on 1-D samples with a Gaussian kernel
    (median-heuristic bandwidth). Returns (MMD^2 V-statistic, p-value).

    Above EXACT_KERNEL_MAX pooled points the kernel is replaced by random
    Fourier features, which keeps memory linear in n; the permutation
    p-value stays exact for whichever statistic is used.
    """
    rng = np.random.default_rng(seed)
    a, b = np.asarray(a, float).ravel(), np.asarray(b, float).ravel()
    z = np.concatenate([a, b])
    n, m = len(a), len(b)
    bw = _median_bandwidth(z)
    w0 = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    perms = np.stack([rng.permutation(w0) for _ in range(n_perm)], axis=1)
    w = np.concatenate([w0[:, None], perms], axis=1)
    if n + m <= EXACT_KERNEL_MAX:
        K = np.exp(-((z[:, None] - z[None, :]) ** 2) / bw)
        stats = np.einsum("ip,ip->p", w, K @ w)
    else:
        # exp(-t^2 / bw) = E cos(omega t) with omega ~ N(0, 2 / bw)
        omega = rng.normal(0.0, np.sqrt(2.0 / bw), FOURIER_FEATURES)
        phase = np.outer(z, omega)
        feats = np.concatenate([np.cos(phase), np.sin(phase)], axis=1) / np.sqrt(FOURIER_FEATURES)
        stats = ((feats.T @ w) ** 2).sum(0)
    obs = stats[0]
    pval = (1.0 + np.sum(stats[1:] >= obs)) / (1.0 + n_perm)
    return float(obs), float(pval)


@dataclass
class FaithfulnessReport:
    intervention: int
    target: int
    eligible: list[int]
    skipped: list[int]
    tests: list[dict]  # {"j", "C", "p_value", "reject"}
    faithful: bool


def check_faithfulness(gt: GroundTruth, k: int, n: int, n_C_draws: int = 5, alpha: float = 0.05,
                       seed=None, n_perm: int = 200, max_samples: int | None = None) -> FaithfulnessReport:
    """Permutation-MMD evidence for linear interventional faithfulness of
    intervention k, on random projections U_j + U_S C^T."""
    if not 0 <= k < len(gt.interventions):
        raise ContractError(f"intervention index {k} out of range (K={len(gt.interventions)})")
    i = gt.target(k)
    de = gt.descendants(i)
    eligible, skipped = [], []
    for j in [i, *gt.children(i)]:
        (skipped if set(gt.parents(j)) & de else eligible).append(j)
    ss = np.random.SeedSequence(seed)
    s_obs, s_int, s_c, s_perm = ss.spawn(4)
    U, _ = ancestral_sample(gt, n, None, s_obs)
    UI, _ = ancestral_sample(gt, n, k, s_int)
    sub = n if max_samples is None else min(n, max_samples)
    U, UI = U[:sub], UI[:sub]
    crng = np.random.default_rng(s_c)
    prng = np.random.default_rng(s_perm)
    tests = []
    for j in eligible:
        S = [s for s in range(gt.p) if s != j and s not in de]
        for _ in range(n_C_draws):
            C = crng.standard_normal(len(S))
            a = U[:, j] + U[:, S] @ C
            b = UI[:, j] + UI[:, S] @ C
            _, pv = mmd_permutation_test(a, b, n_perm, prng)
            tests.append({"j": j, "C": C.tolist(), "p_value": pv, "reject": pv <= alpha})
    faithful = bool(tests) and all(t["reject"] for t in tests)
    return FaithfulnessReport(k, i, eligible, skipped, tests, faithful)


def _partial_corr(cov: np.ndarray) -> float:
    """Partial correlation of variables 0 and 1 given the rest (Schur complement)."""
    A, C = cov[:2, :2], cov[:2, 2:]
    if cov.shape[0] > 2:
        A = A - C @ np.linalg.lstsq(cov[2:, 2:], C.T, rcond=None)[0]
    denom = np.sqrt(A[0, 0] * A[1, 1])
    return float(A[0, 1] / denom) if denom > 0 else 0.0


@dataclass
class SeparationVerdict:
    edge: tuple[int, int]
    holds: bool
    min_abs_partial_corr: float
    argmin: dict


def check_total_separation(gt: GroundTruth, edge: tuple[int, int], c_grid,
                           tol: float = 1e-3) -> SeparationVerdict:
    """Grid search for constants that would make U_i independent of
    U_j + c_j U_i given the assumption's conditioning set (Gaussian case,
    covariance algebra). ``holds`` iff no grid point gets |pcorr| <= tol."""
    if gt.mechanism != "linear":
        raise UnsupportedError("total-separation check needs a linear Gaussian latent SCM")
    i, j = edge
    if not gt.G[i, j]:
        raise ContractError(f"({i}, {j}) is not an edge of the ground-truth graph")
    Sigma = gt.latent_covariance()
    S = sorted(set(gt.parents(j)) & gt.descendants(i))
    rest = [l for l in gt.parents(j) if l not in S and l != i]
    c_grid = np.asarray(c_grid, dtype=np.float64)
    p = gt.p
    best = (np.inf, None)
    for combo in itertools.product(c_grid, repeat=1 + len(S)):
        cj, cks = combo[0], combo[1:]
        rows = []
        e = np.zeros(p); e[i] = 1.0; rows.append(e)
        y = np.zeros(p); y[j] = 1.0; y[i] += cj; rows.append(y)
        for l in rest:
            r = np.zeros(p); r[l] = 1.0; rows.append(r)
        for kk, ck in zip(S, cks):
            r = np.zeros(p); r[kk] = 1.0; r[i] += ck; rows.append(r)
        T = np.asarray(rows)
        pc = abs(_partial_corr(T @ Sigma @ T.T))
        if pc < best[0]:
            best = (pc, {"c_j": float(cj), "c_k": dict(zip(S, map(float, cks)))})
    return SeparationVerdict((i, j), bool(best[0] > tol), float(best[0]), best[1])
