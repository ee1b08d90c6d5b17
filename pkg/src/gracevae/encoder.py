"""Graph-aware variational encoder.

Each sample becomes a scalar feature per node (X nodes carry the sample's
expression value, H nodes a fixed standard-normal scalar). GNN layers over
the merged context graph widen this to ``embed`` channels, a shared linear
readout maps every X node back to one scalar, and a fully connected network
turns the resulting d-vector into (mu, logvar).

Node features are laid out as (n_nodes, batch, width) so the whole batch
shares one propagation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hetnet
from .diffcore import Tensor, activate, as_tensor, clamp, concat, einsum, reparameterize, softmax_with_temperature
from .errors import DimensionError, ParameterError

GNN_KINDS = ("sage", "gcn", "gat")
LOGVAR_CLAMP = 10.0
SLOPE = 0.01
GAT_SLOPE = 0.2


@dataclass(frozen=True)
class GnnVariant:
    kind: str = "sage"
    layers: int = 1

    def __post_init__(self):
        if self.kind not in GNN_KINDS:
            raise ParameterError(f"gnn kind must be one of {GNN_KINDS}, got {self.kind!r}")
        if self.layers not in (1, 3):
            raise ParameterError(f"gnn layer count must be 1 or 3, got {self.layers}")


class GraphOperator:
    """Dense propagation matrices for one (graph, edge mask) pair."""

    def __init__(self, g: hetnet.HeteroGraph, edge_mask=hetnet.EDGE_KINDS):
        self.d, self.m = g.d, g.m
        self.edge_mask = tuple(edge_mask)
        nbrs = hetnet.merge_untyped(g, edge_mask)
        A = hetnet.adjacency(nbrs, g.n_nodes)
        deg = A.sum(1)
        self.adjacency = A
        self.mean = A / np.maximum(deg, 1.0)[:, None]  # empty neighbourhood -> zero row
        Ahat = A + np.eye(len(A))
        dinv = 1.0 / np.sqrt(deg + 1.0)
        self.gcn = dinv[:, None] * Ahat * dinv[None, :]
        self.gat_mask = (Ahat > 0)[:, :, None]

    @property
    def n_nodes(self) -> int:
        return self.d + self.m


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_encoder_params(rng, d: int, p: int, variant: GnnVariant = GnnVariant(),
                        embed: int = 16, hidden: int = 128) -> dict[str, np.ndarray]:
    P: dict[str, np.ndarray] = {}
    w_in = 1
    for layer in range(variant.layers):
        pre = f"gnn{layer}."
        if variant.kind == "sage":
            P[pre + "W_self"] = _uniform(rng, w_in, (w_in, embed))
            P[pre + "W_nbr"] = _uniform(rng, w_in, (w_in, embed))
        else:
            P[pre + "W"] = _uniform(rng, w_in, (w_in, embed))
        if variant.kind == "gat":
            P[pre + "a_src"] = _uniform(rng, embed, (embed, 1))
            P[pre + "a_dst"] = _uniform(rng, embed, (embed, 1))
        P[pre + "b"] = _uniform(rng, w_in, (embed,))
        w_in = embed
    P["readout.w"] = _uniform(rng, embed, (embed, 1))
    P["readout.b"] = _uniform(rng, embed, (1,))
    P["enc.W1"] = _uniform(rng, d, (d, hidden))
    P["enc.b1"] = _uniform(rng, d, (hidden,))
    P["enc.W2"] = _uniform(rng, hidden, (hidden, hidden))
    P["enc.b2"] = _uniform(rng, hidden, (hidden,))
    P["enc.W3"] = _uniform(rng, hidden, (hidden, 2 * p))
    P["enc.b3"] = _uniform(rng, hidden, (2 * p,))
    return P


def _channel_matmul(h: Tensor, W) -> Tensor:
    """(N, n, w) x (w, w') -> (N, n, w')."""
    N, n, w = h.shape
    return (h.reshape(N * n, w) @ W).reshape(N, n, W.shape[1])


def _propagate(op_matrix: np.ndarray, h: Tensor) -> Tensor:
    """Left-multiply the node axis by a constant (N, N) matrix."""
    N, n, w = h.shape
    return (Tensor(op_matrix) @ h.reshape(N, n * w)).reshape(N, n, w)


def gnn_layer(h, gop: GraphOperator, params: dict, layer: int, variant: GnnVariant,
              act: str = "leaky_relu") -> Tensor:
    """One message-passing layer. ``h`` is (N, w) or (N, n, w)."""
    h = as_tensor(h)
    squeeze = h.ndim == 2
    if squeeze:
        h = h.reshape(h.shape[0], 1, h.shape[1])
    if h.shape[0] != gop.n_nodes:
        raise DimensionError(f"gnn_layer: {h.shape[0]} node rows, graph has {gop.n_nodes}")
    pre = f"gnn{layer}."
    w_key = pre + ("W_self" if variant.kind == "sage" else "W")
    if as_tensor(params[w_key]).shape[0] != h.shape[2]:
        raise DimensionError(
            f"gnn_layer: feature width {h.shape[2]} does not match {w_key} {as_tensor(params[w_key]).shape}"
        )
    b = params[pre + "b"]
    if variant.kind == "sage":
        agg = _propagate(gop.mean, h)
        out = _channel_matmul(h, params[pre + "W_self"]) + _channel_matmul(agg, params[pre + "W_nbr"]) + b
    elif variant.kind == "gcn":
        out = _channel_matmul(_propagate(gop.gcn, h), params[pre + "W"]) + b
    else:
        Wh = _channel_matmul(h, params[pre + "W"])                      # (N, n, w')
        N, n, _ = Wh.shape
        s_recv = _channel_matmul(Wh, params[pre + "a_dst"]).reshape(N, 1, n)
        s_send = _channel_matmul(Wh, params[pre + "a_src"]).reshape(1, N, n)
        logits = activate(s_recv + s_send, "leaky_relu", GAT_SLOPE)      # (receiver, sender, n)
        att = softmax_with_temperature(logits, 1.0, axis=1, mask=gop.gat_mask)
        out = einsum("vus,usw->vsw", att, Wh) + b
    out = activate(out, act, SLOPE)
    if squeeze:
        out = out.reshape(out.shape[0], out.shape[2])
    return out


def node_features(x_batch, hfeat: np.ndarray | None, m: int) -> Tensor:
    """(N, n, 1) features: X rows from the batch, H rows fixed across samples."""
    x = as_tensor(x_batch)
    n = x.shape[0]
    parts = [x.T]
    if m:
        parts.append(Tensor(np.broadcast_to(np.asarray(hfeat).reshape(m, 1), (m, n)).copy()))
    h = concat(parts, axis=0) if len(parts) > 1 else parts[0]
    return h.reshape(h.shape[0], n, 1)


def mlp_head(xhat, params, p: int):
    h = activate(xhat @ params["enc.W1"] + params["enc.b1"], "leaky_relu", SLOPE)
    h = activate(h @ params["enc.W2"] + params["enc.b2"], "leaky_relu", SLOPE)
    out = h @ params["enc.W3"] + params["enc.b3"]
    mu = out[:, :p]
    logvar = clamp(out[:, p:], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return mu, logvar


def encode(x_batch, hfeat, gop: GraphOperator, params: dict, variant: GnnVariant, p: int,
           noise=None, rng=None):
    """Returns (mu, logvar, z, noise) for an (n, d) batch."""
    x = as_tensor(x_batch)
    if x.ndim != 2 or x.shape[1] != gop.d:
        raise DimensionError(f"encode: batch has shape {x.shape}, expected (n, {gop.d})")
    n = x.shape[0]
    h = node_features(x, hfeat, gop.m)
    for layer in range(variant.layers):
        h = gnn_layer(h, gop, params, layer, variant)
    hx = h[: gop.d]                                                     # (d, n, e)
    e = hx.shape[2]
    xhat = (hx.reshape(gop.d * n, e) @ params["readout.w"] + params["readout.b"]).reshape(gop.d, n).T
    mu, logvar = mlp_head(xhat, params, p)
    if noise is None:
        rng = np.random.default_rng() if rng is None else rng
        noise = rng.standard_normal((n, p))
    z = reparameterize(mu, logvar, noise)
    return mu, logvar, z, np.asarray(noise)
