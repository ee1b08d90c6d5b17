"""Intervention encoder and structural causal decoder.

The latent DAG matrix is stored as its p(p-1)/2 strictly-upper-triangular
entries only, so lower-triangular and diagonal entries are not parameters
at all. Node i's mechanism reads U_j for j < i through column i of M plus
its own exogenous noise z_i. An intervention code (a, eta) adds a_i * eta
to every node's mechanism; a one-hot ``a`` is the exact single-node shift.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .diffcore import Tensor, activate, as_tensor, concat, softmax_with_temperature, triu_from_vector
from .errors import ContractError, DimensionError, ParameterError

MECHANISMS = ("linear", "mlp")
SLOPE = 0.01


@dataclass
class InterventionCode:
    a: Tensor      # (p,) on the simplex
    eta: Tensor    # scalar shape (1,)

    def hardened(self) -> "InterventionCode":
        """Argmax one-hot version (evaluation only, not differentiable in a)."""
        one = np.zeros(self.a.shape)
        one[int(np.argmax(self.a.data))] = 1.0
        return InterventionCode(Tensor(one), self.eta)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_causal_params(rng, p: int, d: int, K: int, mechanism: str = "linear", hidden: int = 128,
                       mech_hidden: int = 32, dag_init: float = 0.1) -> dict[str, np.ndarray]:
    if mechanism not in MECHANISMS:
        raise ParameterError(f"mechanism must be one of {MECHANISMS}, got {mechanism!r}")
    P: dict[str, np.ndarray] = {}
    P["dag.m"] = rng.uniform(-dag_init, dag_init, p * (p - 1) // 2)
    P["interv.W"] = _uniform(rng, K, (K, p + 1))
    P["interv.b"] = np.zeros(p + 1)
    if mechanism == "mlp":
        for i in range(1, p):
            P[f"mech{i}.W1"] = _uniform(rng, i, (i, mech_hidden))
            P[f"mech{i}.b1"] = _uniform(rng, i, (mech_hidden,))
            P[f"mech{i}.W2"] = _uniform(rng, mech_hidden, (mech_hidden, 1))
            P[f"mech{i}.b2"] = np.zeros(1)
    P["mix.W1"] = _uniform(rng, p, (p, hidden))
    P["mix.b1"] = _uniform(rng, p, (hidden,))
    P["mix.W2"] = _uniform(rng, hidden, (hidden, hidden))
    P["mix.b2"] = _uniform(rng, hidden, (hidden,))
    P["mix.W3"] = _uniform(rng, hidden, (hidden, d))
    P["mix.b3"] = _uniform(rng, hidden, (d,))
    return P


def dag_matrix(params, p: int) -> Tensor:
    return triu_from_vector(params["dag.m"], p)


def encode_intervention(indicator, params, t: float) -> InterventionCode:
    """(a, eta) from a 0/1 indicator over the K training interventions."""
    ind = np.asarray(indicator, dtype=np.float64).reshape(1, -1)
    if not np.any(ind != 0):
        raise ContractError("intervention indicator must have at least one nonzero entry")
    W = as_tensor(params["interv.W"])
    if ind.shape[1] != W.shape[0]:
        raise DimensionError(f"indicator has length {ind.shape[1]}, encoder expects {W.shape[0]}")
    out = (Tensor(ind) @ W + params["interv.b"]).reshape(W.shape[1])
    p = W.shape[1] - 1
    a = softmax_with_temperature(out[:p], t)
    return InterventionCode(a, out[p:])


def one_hot(k: int, K: int) -> np.ndarray:
    v = np.zeros(K)
    v[k] = 1.0
    return v


def temperature_schedule(epoch, total_epochs, temp_max) -> Fraction:
    """1 for the first half of training, then linear up to temp_max at the last epoch."""
    e, T, mx = Fraction(epoch), Fraction(total_epochs), Fraction(temp_max)
    half = T / 2
    if e < half or T == half:
        return Fraction(1)
    return 1 + (mx - 1) * (e - half) / (T - half)


def shift_vector(codes, p: int):
    """Sum of a * eta over codes; None when there are no codes."""
    s = None
    for c in codes:
        term = c.a * c.eta
        s = term if s is None else s + term
    return s


def scm_forward(z, M, params, mechanism: str = "linear", code: InterventionCode | None = None,
                shift=None) -> Tensor:
    """U_i = c_i(M[:, i] * U_{<i}) + z_i (+ a_i * eta), in index order."""
    z = as_tensor(z)
    M = as_tensor(M)
    n, p = z.shape
    if M.shape != (p, p):
        raise DimensionError(f"scm_forward: z has {p} columns but M is {M.shape}")
    if code is not None:
        extra = shift_vector([code], p)
        shift = extra if shift is None else shift + extra
    if mechanism == "linear":
        # U = (z + shift) (I - M)^-1 and, M being nilpotent, (I - M)^-1 = sum_k M^k
        base = z if shift is None else z + as_tensor(shift).reshape(1, p)
        total, power = None, None
        for _ in range(p - 1):
            power = M if power is None else power @ M
            total = power if total is None else total + power
        return base if total is None else base + base @ total
    cols = []
    for i in range(p):
        col = z[:, i:i + 1]
        if i > 0:
            prev = concat(cols, axis=1) if i > 1 else cols[0]
            inp = prev * M[:i, i].reshape(1, i)
            h = activate(inp @ params[f"mech{i}.W1"] + params[f"mech{i}.b1"], "leaky_relu", SLOPE)
            col = col + (h @ params[f"mech{i}.W2"] + params[f"mech{i}.b2"])
        if shift is not None:
            col = col + as_tensor(shift)[i:i + 1]
        cols.append(col)
    return concat(cols, axis=1) if p > 1 else cols[0]


def mix(U, params) -> Tensor:
    U = as_tensor(U)
    if U.shape[1] != as_tensor(params["mix.W1"]).shape[0]:
        raise DimensionError(f"mix: U has {U.shape[1]} columns, mixer expects {as_tensor(params['mix.W1']).shape[0]}")
    h = activate(U @ params["mix.W1"] + params["mix.b1"], "leaky_relu", SLOPE)
    h = activate(h @ params["mix.W2"] + params["mix.b2"], "leaky_relu", SLOPE)
    return h @ params["mix.W3"] + params["mix.b3"]


def generate(z, M, params, mechanism: str = "linear", codes=()) -> Tensor:
    """Decode z; all codes' shifts are applied additively in one SCM pass."""
    z = as_tensor(z)
    s = shift_vector(list(codes), z.shape[1])
    return mix(scm_forward(z, M, params, mechanism, shift=s), params)
