"""Dense float64 tensors with a recorded reverse-mode derivative.

Usage::

    with ComputationRecord() as rec:
        w = rec.leaf(np.ones((3, 2)))
        loss = (x @ w).sum()
    grads = backward(loss)          # {node_id: Tensor}
    grads[w.node_id]

Every operation touching a recorded tensor appends one entry to the active
record; operations on constants only are evaluated eagerly and stay
unrecorded. A record is rebuilt on every forward pass.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, DimensionError, NumericError, ParameterError

_ACTIVE: contextvars.ContextVar["ComputationRecord | None"] = contextvars.ContextVar(
    "gracevae_active_record", default=None
)

ACTIVATIONS = ("leaky_relu", "sigmoid", "tanh", "identity")


@dataclass
class Entry:
    kind: str
    inputs: tuple[int, ...]
    output: int
    attrs: dict
    saved: object = None


@dataclass
class ComputationRecord:
    """Topologically ordered, single-assignment list of recorded operations."""

    entries: list[Entry] = field(default_factory=list)
    values: dict[int, np.ndarray] = field(default_factory=dict)
    leaves: dict[int, bool] = field(default_factory=dict)  # id -> requires_grad
    _next_id: int = 0
    _token: object = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def leaf(self, data, requires_grad: bool = True) -> "Tensor":
        t = Tensor(data, requires_grad=requires_grad)
        t.node_id = self._new_id()
        t.record = self
        self.values[t.node_id] = t.data
        self.leaves[t.node_id] = requires_grad
        return t

    def _attach(self, t: "Tensor") -> int:
        if t.record is self:
            return t.node_id
        if t.record is not None:
            raise ContractError("tensor belongs to a different computation record")
        # constants entering a recorded op become non-differentiable leaves;
        # the constant itself stays unattached so it can be reused elsewhere
        i = self._new_id()
        self.values[i] = t.data
        self.leaves[i] = False
        return i

    def replay(self, leaf_values: dict[int, np.ndarray] | None = None) -> dict[int, np.ndarray]:
        """Re-run every entry from leaf values (stored ones unless overridden)."""
        vals = {i: self.values[i] for i in self.leaves}
        if leaf_values:
            for i, v in leaf_values.items():
                if i not in self.leaves:
                    raise ContractError(f"node {i} is not a leaf of this record")
                vals[i] = np.asarray(v, dtype=np.float64)
        for e in self.entries:
            fwd = _OPS[e.kind][0]
            out, _ = fwd(*(vals[i] for i in e.inputs), **e.attrs)
            vals[e.output] = out
        return vals


def active_record() -> ComputationRecord | None:
    return _ACTIVE.get()


class Tensor:
    __slots__ = ("data", "requires_grad", "node_id", "record")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self.record: ComputationRecord | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        tag = f", node_id={self.node_id}" if self.node_id is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    # arithmetic
    def __add__(self, o):
        return apply("add", self, o)

    def __radd__(self, o):
        return apply("add", o, self)

    def __sub__(self, o):
        return apply("sub", self, o)

    def __rsub__(self, o):
        return apply("sub", o, self)

    def __mul__(self, o):
        return apply("mul", self, o)

    def __rmul__(self, o):
        return apply("mul", o, self)

    def __truediv__(self, o):
        return apply("div", self, o)

    def __rtruediv__(self, o):
        return apply("div", o, self)

    def __neg__(self):
        return apply("mul", self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __pow__(self, k):
        if k == 2:
            return apply("square", self)
        raise NotImplementedError("only square is supported")

    def __getitem__(self, idx):
        return apply("getitem", self, idx=idx)

    def sum(self, axis=None, keepdims=False):
        return apply("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return apply("reshape", self, shape=tuple(shape))

    def transpose(self, *axes):
        return apply("transpose", self, axes=tuple(axes) if axes else None)

    @property
    def T(self):
        return self.transpose()

    def exp(self):
        return apply("exp", self)

    def log(self):
        return apply("log", self)

    def abs(self):
        return apply("abs", self)

    def square(self):
        return apply("square", self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply(op: str, *inputs, **attrs) -> Tensor:
    fwd = _OPS[op][0]
    ts = [as_tensor(x) for x in inputs]
    out, saved = fwd(*(t.data for t in ts), **attrs)
    rec = _ACTIVE.get()
    live = [t for t in ts if t.record is not None]
    if not live:
        return Tensor(out)
    if rec is None or any(t.record is not rec for t in live):
        rec = live[0].record
    ids = tuple(rec._attach(t) for t in ts)
    res = Tensor(out, requires_grad=True)
    res.node_id = rec._new_id()
    res.record = rec
    rec.values[res.node_id] = out
    rec.entries.append(Entry(op, ids, res.node_id, attrs, saved))
    return res


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---- op table: kind -> (forward(*arrays, **attrs) -> (out, saved),
#                         backward(g, out, saved, *arrays, **attrs) -> grads)

def _f_add(a, b):
    return a + b, None


def _b_add(g, out, saved, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _f_sub(a, b):
    return a - b, None


def _b_sub(g, out, saved, a, b):
    return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)


def _f_mul(a, b):
    return a * b, None


def _b_mul(g, out, saved, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _f_div(a, b):
    return a / b, None


def _b_div(g, out, saved, a, b):
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


def _f_matmul(a, b):
    return a @ b, None


def _b_matmul(g, out, saved, a, b):
    return g @ b.T, a.T @ g


def _f_einsum(a, b, spec):
    return np.einsum(spec, a, b), None


def _b_einsum(g, out, saved, a, b, spec):
    ins, o = spec.split("->")
    sa, sb = ins.split(",")
    return np.einsum(f"{o},{sb}->{sa}", g, b), np.einsum(f"{sa},{o}->{sb}", a, g)


def _f_exp(a):
    out = np.exp(a)
    return out, None


def _b_exp(g, out, saved, a):
    return (g * out,)


def _f_log(a):
    return np.log(a), None


def _b_log(g, out, saved, a):
    return (g / a,)


def _f_abs(a):
    return np.abs(a), None


def _b_abs(g, out, saved, a):
    return (g * np.sign(a),)


def _f_square(a):
    return a * a, None


def _b_square(g, out, saved, a):
    return (2.0 * a * g,)


def _f_sum(a, axis, keepdims):
    return np.asarray(a.sum(axis=axis, keepdims=keepdims)), None


def _b_sum(g, out, saved, a, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def _f_reshape(a, shape):
    return a.reshape(shape), None


def _b_reshape(g, out, saved, a, shape):
    return (g.reshape(a.shape),)


def _f_transpose(a, axes):
    return np.transpose(a, axes), None


def _b_transpose(g, out, saved, a, axes):
    inv = None if axes is None else tuple(np.argsort(axes))
    return (np.transpose(g, inv),)


def _f_getitem(a, idx):
    return np.array(a[idx], dtype=np.float64), None


def _basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is Ellipsis for i in parts)


def _b_getitem(g, out, saved, a, idx):
    z = np.zeros_like(a)
    if _basic_index(idx):
        z[idx] = g
    else:
        np.add.at(z, idx, g)
    return (z,)


def _f_concat(*arrays, axis):
    return np.concatenate(arrays, axis=axis), None


def _b_concat(g, out, saved, *arrays, axis):
    cuts = np.cumsum([x.shape[axis] for x in arrays])[:-1]
    return tuple(np.split(g, cuts, axis=axis))


def _f_activate(a, kind, slope):
    if kind == "leaky_relu":
        return np.where(a > 0, a, slope * a), None
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a)), None
    if kind == "tanh":
        return np.tanh(a), None
    return a.copy(), None


def _b_activate(g, out, saved, a, kind, slope):
    if kind == "leaky_relu":
        # derivative at exactly 0 is the slope
        return (g * np.where(a > 0, 1.0, slope),)
    if kind == "sigmoid":
        return (g * out * (1.0 - out),)
    if kind == "tanh":
        return (g * (1.0 - out * out),)
    return (g,)


def _f_softmax(v, t, axis, mask):
    s = t * v
    if mask is not None:
        s = np.where(mask, s, -np.inf)
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True), None


def _b_softmax(g, out, saved, v, t, axis, mask):
    inner = (g * out).sum(axis=axis, keepdims=True)
    return (t * out * (g - inner),)


def _f_reparam(mu, logvar, noise):
    std = np.exp(0.5 * logvar)
    return mu + std * noise, std


def _b_reparam(g, out, std, mu, logvar, noise):
    return g, 0.5 * g * std * noise, None


def _f_clamp(a, lo, hi):
    return np.clip(a, lo, hi), None


def _b_clamp(g, out, saved, a, lo, hi):
    return (g * ((a >= lo) & (a <= hi)),)


def _f_sqdist(a, b):
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0), None


def _b_sqdist(g, out, saved, a, b):
    ga = 2.0 * (g.sum(1)[:, None] * a - g @ b)
    gb = 2.0 * (g.sum(0)[:, None] * b - g.T @ a)
    return ga, gb


def _f_triu(vec, p):
    m = np.zeros((p, p))
    m[np.triu_indices(p, 1)] = vec
    return m, None


def _b_triu(g, out, saved, vec, p):
    return (g[np.triu_indices(p, 1)].copy(),)


_OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (_f_add, _b_add),
    "sub": (_f_sub, _b_sub),
    "mul": (_f_mul, _b_mul),
    "div": (_f_div, _b_div),
    "matmul": (_f_matmul, _b_matmul),
    "einsum": (_f_einsum, _b_einsum),
    "exp": (_f_exp, _b_exp),
    "log": (_f_log, _b_log),
    "abs": (_f_abs, _b_abs),
    "square": (_f_square, _b_square),
    "sum": (_f_sum, _b_sum),
    "reshape": (_f_reshape, _b_reshape),
    "transpose": (_f_transpose, _b_transpose),
    "getitem": (_f_getitem, _b_getitem),
    "concat": (_f_concat, _b_concat),
    "activate": (_f_activate, _b_activate),
    "softmax": (_f_softmax, _b_softmax),
    "reparameterize": (_f_reparam, _b_reparam),
    "clamp": (_f_clamp, _b_clamp),
    "sqdist": (_f_sqdist, _b_sqdist),
    "triu": (_f_triu, _b_triu),
}


# ---- public op wrappers

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return apply("matmul", a, b)


def einsum(spec: str, a, b) -> Tensor:
    return apply("einsum", a, b, spec=spec)


def activate(x, kind: str = "leaky_relu", slope: float = 0.01) -> Tensor:
    if kind not in ACTIVATIONS:
        raise ParameterError(f"unsupported activation {kind!r}")
    return apply("activate", x, kind=kind, slope=float(slope))


def softmax_with_temperature(v, t: float, axis: int = -1, mask=None) -> Tensor:
    """exp(t*v_i) / sum_j exp(t*v_j) along ``axis``; masked-out entries get 0."""
    if not t > 0:
        raise ParameterError(f"softmax temperature must be positive, got {t}")
    v = as_tensor(v)
    if not np.all(np.isfinite(v.data)):
        raise NumericError("softmax logits must be finite")
    return apply("softmax", v, t=float(t), axis=axis, mask=mask)


def reparameterize(mu, logvar, noise) -> Tensor:
    mu, logvar, noise = as_tensor(mu), as_tensor(logvar), as_tensor(noise)
    if not (mu.shape == logvar.shape == noise.shape):
        raise DimensionError(
            f"reparameterize: shapes differ {mu.shape}, {logvar.shape}, {noise.shape}"
        )
    return apply("reparameterize", mu, logvar, noise)


def clamp(x, lo: float, hi: float) -> Tensor:
    return apply("clamp", x, lo=lo, hi=hi)


def concat(tensors, axis: int = -1) -> Tensor:
    return apply("concat", *tensors, axis=axis)


def sqdist(a, b) -> Tensor:
    """Pairwise squared Euclidean distances between rows of ``a`` and ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"sqdist: column counts differ {a.shape} vs {b.shape}")
    return apply("sqdist", a, b)


def triu_from_vector(vec, p: int) -> Tensor:
    """Strictly upper-triangular p x p matrix filled row-major from ``vec``."""
    vec = as_tensor(vec)
    if vec.shape != (p * (p - 1) // 2,):
        raise DimensionError(f"triu_from_vector: need {p * (p - 1) // 2} entries, got {vec.shape}")
    return apply("triu", vec, p=p)


def backward(loss: Tensor) -> dict[int, Tensor]:
    """Gradients of a scalar ``loss`` for every differentiable leaf of its record."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    rec = loss.record
    if rec is None:
        return {}
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    vals = rec.values
    for e in reversed(rec.entries):
        g = grads.pop(e.output, None)
        if g is None:
            continue
        bwd = _OPS[e.kind][1]
        ins = [vals[i] for i in e.inputs]
        gin = bwd(g, vals[e.output], e.saved, *ins, **e.attrs)
        for i, gi in zip(e.inputs, gin):
            if gi is None:
                continue
            if i in rec.leaves and not rec.leaves[i]:
                continue
            if i in grads:
                grads[i] = grads[i] + gi
            else:
                grads[i] = gi
    out = {}
    for i, req in rec.leaves.items():
        if req:
            g = grads.get(i)
            out[i] = Tensor(g if g is not None else np.zeros_like(vals[i]))
    return out


def kink_margin(rec: ComputationRecord) -> float:
    """Smallest distance of any recorded input to a point where its op is not
    differentiable (leaky ReLU and abs at 0, clamp at its bounds).

    Finite differences are only meaningful when this exceeds the step times
    the input's sensitivity to the perturbed coordinate.
    """
    margin = np.inf
    for e in rec.entries:
        x = rec.values[e.inputs[0]]
        if e.kind == "activate" and e.attrs["kind"] == "leaky_relu" or e.kind == "abs":
            dist = np.abs(x)
        elif e.kind == "clamp":
            dist = np.minimum(np.abs(x - e.attrs["lo"]), np.abs(x - e.attrs["hi"]))
        else:
            continue
        if dist.size:
            margin = min(margin, float(dist.min()))
    return margin


def _evaluate(f, params: dict[str, np.ndarray]) -> float:
    val = f({k: Tensor(v) for k, v in params.items()})
    v = float(as_tensor(val).data.reshape(-1)[0])
    if not np.isfinite(v):
        raise NumericError("grad_check: function value is not finite")
    return v


def grad_check(f, params: dict[str, np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between recorded gradients and central differences.

    ``f`` maps a dict of Tensors to a scalar Tensor and must be deterministic.
    Error per coordinate is |a - n| / max(1, |a|, |n|).
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    with ComputationRecord() as rec:
        leaves = {k: rec.leaf(v) for k, v in params.items()}
        loss = f(leaves)
    loss = as_tensor(loss)
    if not np.all(np.isfinite(loss.data)):
        raise NumericError("grad_check: loss is not finite")
    grads = backward(loss)
    worst = 0.0
    for k, v in params.items():
        nid = leaves[k].node_id
        analytic = grads[nid].data if nid in grads else np.zeros_like(v)
        if not np.all(np.isfinite(analytic)):
            raise NumericError(f"grad_check: non-finite gradient for {k}")
        flat = v.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = _evaluate(f, params)
            flat[j] = orig - eps
            down = _evaluate(f, params)
            flat[j] = orig
            num = (up - down) / (2.0 * eps)
            a = analytic.reshape(-1)[j]
            err = abs(a - num) / max(1.0, abs(a), abs(num))
            worst = max(worst, err)
    return worst
