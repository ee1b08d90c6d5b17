"""Assembly of encoder, intervention encoder and causal decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import causal, encoder, hetnet
from .config import TrainConfig
from .diffcore import Tensor
from .objective import total_loss


@dataclass
class GraceModel:
    p: int
    d: int
    K: int
    cfg: TrainConfig
    gop: encoder.GraphOperator
    hfeat: np.ndarray | None

    @classmethod
    def build(cls, cfg: TrainConfig, graph: hetnet.HeteroGraph, K: int) -> "GraceModel":
        p = cfg.latent_dim if cfg.latent_dim is not None else K
        gop = encoder.GraphOperator(graph, cfg.edge_mask)
        hfeat = None
        if graph.m:
            hfeat = hetnet.init_h_features(graph.m, 1, _sub_seed(cfg.seed, 1)).values
        return cls(p, graph.d, K, cfg, gop, hfeat)

    def init_params(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(_sub_seed(self.cfg.seed, 0))
        P = encoder.init_encoder_params(rng, self.d, self.p, self.cfg.variant, self.cfg.embed, self.cfg.hidden)
        P.update(causal.init_causal_params(rng, self.p, self.d, self.K, self.cfg.mechanism, self.cfg.hidden))
        return P

    def encode(self, P, x, noise=None, rng=None):
        return encoder.encode(x, self.hfeat, self.gop, P, self.cfg.variant, self.p, noise=noise, rng=rng)

    def dag(self, P) -> Tensor:
        return causal.dag_matrix(P, self.p)

    def code(self, P, k, t: float = 1.0) -> causal.InterventionCode:
        """InterventionCode for training intervention index k (or an indicator vector)."""
        ind = causal.one_hot(k, self.K) if np.isscalar(k) else k
        return causal.encode_intervention(ind, P, t)

    def decode(self, P, z, codes=()) -> Tensor:
        return causal.generate(z, self.dag(P), P, self.cfg.mechanism, codes)

    def batch_loss(self, P, x_obs, interventional, epoch: int, t: float, noise):
        """Loss for one batch group: ``interventional`` is a list of (k, real rows)."""
        mu, logvar, z, _ = self.encode(P, x_obs, noise=noise)
        M = self.dag(P)
        xhat = causal.generate(z, M, P, self.cfg.mechanism)
        pairs = []
        for k, real in interventional:
            cf = causal.generate(z, M, P, self.cfg.mechanism, [self.code(P, k, t)])
            pairs.append((real, cf))
        return total_loss(x_obs, xhat, mu, logvar, pairs, M, self.cfg.weights, epoch, self.cfg.mmd)

    # ---- evaluation helpers (plain arrays in, arrays out)

    def latents(self, P, x) -> np.ndarray:
        """Causal latents of the posterior mean of each row."""
        mu, _, _, _ = self.encode(P, x, noise=np.zeros((len(x), self.p)))
        return causal.scm_forward(mu, self.dag(P), P, self.cfg.mechanism).data

    def counterfactual(self, P, x_obs, ks, t: float, rng=None, hard: bool = False) -> np.ndarray:
        rng = np.random.default_rng(0) if rng is None else rng
        _, _, z, _ = self.encode(P, x_obs, rng=rng)
        codes = [self.code(P, k, t) for k in ks]
        if hard:
            codes = [c.hardened() for c in codes]
        return self.decode(P, z, codes).data

    def intervention_codes(self, P, t: float) -> list[causal.InterventionCode]:
        return [self.code(P, k, t) for k in range(self.K)]


def _sub_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])
