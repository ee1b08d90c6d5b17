"""Loss terms and coefficient schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .diffcore import Tensor, as_tensor, sqdist
from .errors import ContractError, DimensionError, NumericError, ParameterError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MmdConfig:
    sigma: float = 1000.0
    kernel_num: int = 10

    def __post_init__(self):
        if not self.sigma > 0 or self.kernel_num < 1:
            raise ParameterError(f"bad MMD config sigma={self.sigma}, kernel_num={self.kernel_num}")

    @property
    def bandwidths(self) -> tuple[float, ...]:
        return tuple(self.sigma * 2.0 ** k for k in range(self.kernel_num))


@dataclass(frozen=True)
class LossWeights:
    alpha_max: float = 8.0
    beta_max: float = 2.0
    lam: float = 1e-4
    epochs: int = 100

    def __post_init__(self):
        if min(self.alpha_max, self.beta_max, self.lam) < 0:
            raise ParameterError("loss weights must be nonnegative")


def recon_nll(x, xhat) -> Tensor:
    """Unit-variance Gaussian negative log-likelihood, averaged over rows."""
    x, xhat = as_tensor(x), as_tensor(xhat)
    if x.shape != xhat.shape:
        raise DimensionError(f"recon_nll: shapes differ {x.shape} vs {xhat.shape}")
    n, d = x.shape
    return ((x - xhat).square().sum() * (0.5 / n)) + 0.5 * d * LOG_2PI


def kl_diag_gaussian(mu, logvar) -> Tensor:
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise DimensionError(f"kl_diag_gaussian: shapes differ {mu.shape} vs {logvar.shape}")
    n = mu.shape[0]
    return (logvar.exp() + mu.square() - 1.0 - logvar).sum() * (0.5 / n)


def mmd2(A, B, cfg: MmdConfig = MmdConfig(), bandwidths=None) -> Tensor:
    """Biased (V-statistic) squared MMD under a sum of kernels exp(-|x-y|^2 / b)."""
    A, B = as_tensor(A), as_tensor(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"mmd2: column counts differ {A.shape} vs {B.shape}")
    if A.shape[0] < 1 or B.shape[0] < 1:
        raise ContractError("mmd2 needs at least one row on each side")
    bws = cfg.bandwidths if bandwidths is None else tuple(bandwidths)
    scales = -1.0 / np.asarray(bws, dtype=np.float64)
    return _kernel_mean(sqdist(A, A), scales) + _kernel_mean(sqdist(B, B), scales) \
        - 2.0 * _kernel_mean(sqdist(A, B), scales)


def _kernel_mean(D: Tensor, scales: np.ndarray) -> Tensor:
    """sum_b mean_ij exp(-D_ij / b), all bandwidths in one pass."""
    n, m = D.shape
    return (D.reshape(n, m, 1) * scales).exp().sum() * (1.0 / (n * m))


def schedule(kind: str, epoch: int, total_epochs: int, max_value) -> Fraction:
    """Piecewise-linear warm-up, exact in rationals.

    alpha: 0 before epoch 5, linear up to max at epoch 5 + total/2, flat after.
    beta:  0 before epoch 10, linear up to max at epoch total/2, flat after.
    """
    e, T, mx = Fraction(epoch), Fraction(total_epochs), Fraction(max_value)
    if kind == "alpha":
        start, end = Fraction(5), 5 + T / 2
    elif kind == "beta":
        start, end = Fraction(10), T / 2
    else:
        raise ParameterError(f"unknown schedule kind {kind!r}")
    if e < start:
        return Fraction(0)
    if e >= end or end <= start:
        return mx
    return mx * (e - start) / (end - start)


def l1_dag(M) -> Tensor:
    """Sum of |M| over the strictly upper triangle (the only free entries)."""
    M = as_tensor(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"l1_dag needs a square matrix, got {M.shape}")
    if M.shape[0] < 2:
        return (M * 0.0).sum()
    return M[np.triu_indices(M.shape[0], 1)].abs().sum()


BREAKDOWN_COLUMNS = ("epoch", "recon", "kl", "mmd", "l1", "alpha", "beta", "temp", "total")


def total_loss(x_obs, xhat_obs, mu, logvar, int_pairs, M, weights: LossWeights, epoch: int,
               mmd_cfg: MmdConfig = MmdConfig()):
    """recon + beta*kl over observational rows + alpha * sum_k mmd2(real_k, generated_k)
    + lambda * |M|_1. ``int_pairs`` is a list of (real, generated) matrices for
    the interventions present in this batch group.

    Returns (loss, breakdown) where breakdown holds unweighted terms plus the
    coefficients in force and satisfies
    total == recon + beta*kl + alpha*mmd + lambda*l1.
    """
    if x_obs is None and not int_pairs:
        raise ContractError("total_loss: empty batch group")
    alpha = float(schedule("alpha", epoch, weights.epochs, weights.alpha_max))
    beta = float(schedule("beta", epoch, weights.epochs, weights.beta_max))
    parts = {}
    loss = None
    if x_obs is not None:
        rec = recon_nll(x_obs, xhat_obs)
        kl = kl_diag_gaussian(mu, logvar)
        parts["recon"], parts["kl"] = rec, kl
        loss = rec + kl * beta
    mmd = None
    for real, gen in int_pairs:
        term = mmd2(real, gen, mmd_cfg)
        mmd = term if mmd is None else mmd + term
    if mmd is not None:
        parts["mmd"] = mmd
        loss = mmd * alpha if loss is None else loss + mmd * alpha
    l1 = l1_dag(M)
    parts["l1"] = l1
    loss = loss + l1 * weights.lam
    breakdown = {k: float(v.data) for k, v in parts.items()}
    breakdown.setdefault("recon", 0.0)
    breakdown.setdefault("kl", 0.0)
    breakdown.setdefault("mmd", 0.0)
    breakdown.update(alpha=alpha, beta=beta, total=float(loss.data))
    return loss, breakdown


def assert_finite_terms(breakdown: dict) -> None:
    for k, v in breakdown.items():
        if not np.isfinite(v):
            raise NumericError(f"non-finite loss term {k!r} = {v}")
