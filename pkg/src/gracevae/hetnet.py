"""Heterogeneous context network over feature (X) and group (H) nodes.

Node universe: X nodes take indices 0..d-1, H nodes d..d+m-1. Typed edges
are kept per kind (GG = X-X, PG = X-H, PP = H-H) and merged into one
untyped, undirected neighbour structure for message passing.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, VocabularyError

log = logging.getLogger(__name__)

EDGE_KINDS = ("GG", "PG", "PP")


def _canon(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True)
class HeteroGraph:
    d: int
    m: int
    edges_xx: tuple[tuple[int, int], ...] = ()
    edges_xh: tuple[tuple[int, int], ...] = ()
    edges_hh: tuple[tuple[int, int], ...] = ()
    x_names: tuple[str, ...] | None = None
    h_names: tuple[str, ...] | None = None
    skipped: int = 0
    merged_neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = self.d + self.m
        for kind, edges in self.typed_edges().items():
            for u, v in edges:
                if u == v:
                    raise ValueError(f"self-loop at node {u} in {kind} edges")
                if not (0 <= u < n and 0 <= v < n):
                    raise ValueError(f"{kind} edge ({u}, {v}) out of range for {n} nodes")
        object.__setattr__(self, "merged_neighbors", merge_untyped(self, EDGE_KINDS))

    @property
    def n_nodes(self) -> int:
        return self.d + self.m

    def typed_edges(self) -> dict[str, tuple[tuple[int, int], ...]]:
        return {"GG": self.edges_xx, "PG": self.edges_xh, "PP": self.edges_hh}

    def counts(self) -> tuple[int, int, int]:
        return len(self.edges_xx), len(self.edges_xh), len(self.edges_hh)

    def edge_set(self, edge_mask=EDGE_KINDS) -> set[tuple[int, int]]:
        typed = self.typed_edges()
        out: set[tuple[int, int]] = set()
        for kind in edge_mask:
            out.update(typed[kind])
        return out


def make_graph(d, m, edges_xx=(), edges_xh=(), edges_hh=(), **kw) -> HeteroGraph:
    """Build a graph from raw edge lists (any orientation, duplicates allowed).

    X-H edges may be given as (x, h) or (h, x) in universe indices.
    """

    def clean(edges):
        return tuple(sorted({_canon(int(u), int(v)) for u, v in edges}))

    return HeteroGraph(d, m, clean(edges_xx), clean(edges_xh), clean(edges_hh), **kw)


def merge_untyped(g: HeteroGraph, edge_mask=EDGE_KINDS) -> tuple[tuple[int, ...], ...]:
    """Sorted, deduplicated, symmetric neighbour lists over the edge kinds in ``edge_mask``."""
    bad = set(edge_mask) - set(EDGE_KINDS)
    if bad:
        raise ValueError(f"unknown edge kinds {sorted(bad)}")
    nbrs: list[set[int]] = [set() for _ in range(g.n_nodes)]
    for u, v in g.edge_set(edge_mask):
        nbrs[u].add(v)
        nbrs[v].add(u)
    return tuple(tuple(sorted(s)) for s in nbrs)


def n_undirected_edges(neighbors) -> int:
    return sum(len(s) for s in neighbors) // 2


def adjacency(neighbors, n: int | None = None) -> np.ndarray:
    n = len(neighbors) if n is None else n
    a = np.zeros((n, n))
    for v, s in enumerate(neighbors):
        a[v, list(s)] = 1.0
    return a


def parse_edge_mask(text: str) -> tuple[str, ...]:
    """'GG+PG' -> ('GG', 'PG'); 'none' or '' -> ()."""
    text = text.strip()
    if text in ("", "none", "NONE", "-"):
        return ()
    kinds = tuple(k.strip().upper() for k in text.split("+"))
    bad = [k for k in kinds if k not in EDGE_KINDS]
    if bad:
        raise ValueError(f"unknown edge kinds {bad}; expected a '+'-joined subset of {EDGE_KINDS}")
    return tuple(k for k in EDGE_KINDS if k in kinds)


def format_edge_mask(mask) -> str:
    return "+".join(k for k in EDGE_KINDS if k in mask) or "none"


def read_vocabulary(source) -> list[str]:
    """One id per line; line number (0-based, blank lines excluded) is the index."""
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def _open(source):
    if hasattr(source, "read"):
        return source, getattr(source, "name", "<stream>")
    return open(source, encoding="utf-8"), str(source)


def load_edge_lists(sources, x_vocab, h_vocab, unknown: str = "reject") -> HeteroGraph:
    """Read tab-separated ``src_type src_id dst_type dst_id`` records.

    ``unknown`` is ``"reject"`` (raise on unknown ids) or ``"skip"`` (drop the
    record and count it in ``HeteroGraph.skipped``).
    """
    if unknown not in ("reject", "skip"):
        raise ValueError(f"unknown-id policy must be 'reject' or 'skip', got {unknown!r}")
    if isinstance(sources, (str, Path, io.IOBase)) or hasattr(sources, "read"):
        sources = [sources]
    x_index = {name: i for i, name in enumerate(x_vocab)}
    h_index = {name: i for i, name in enumerate(h_vocab)}
    d, m = len(x_vocab), len(h_vocab)
    xx, xh, hh = set(), set(), set()
    skipped = 0
    for src in sources:
        fh, name = _open(src)
        try:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n").rstrip("\r")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                cols = line.split("\t")
                if len(cols) != 4:
                    raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", name, lineno)
                st, sid, dt, did = (c.strip() for c in cols)
                ends = []
                for typ, ident in ((st, sid), (dt, did)):
                    if typ == "X":
                        idx = x_index.get(ident)
                        off = 0
                    elif typ == "H":
                        idx = h_index.get(ident)
                        off = d
                    else:
                        raise ParseError(f"node type must be 'X' or 'H', got {typ!r}", name, lineno)
                    if idx is None:
                        ends = None
                        if unknown == "reject":
                            raise VocabularyError(f"{name}:{lineno}: unknown {typ} id {ident!r}")
                        break
                    ends.append((typ, idx + off))
                if ends is None:
                    skipped += 1
                    continue
                (ta, a), (tb, b) = ends
                if a == b:
                    raise ParseError("self-loop edge", name, lineno)
                e = _canon(a, b)
                if ta == tb == "X":
                    xx.add(e)
                elif ta == tb == "H":
                    hh.add(e)
                else:
                    xh.add(e)
        finally:
            if not hasattr(src, "read"):
                fh.close()
    if skipped:
        log.warning("skipped %d edge records with unknown ids", skipped)
    return HeteroGraph(
        d, m, tuple(sorted(xx)), tuple(sorted(xh)), tuple(sorted(hh)),
        x_names=tuple(x_vocab), h_names=tuple(h_vocab), skipped=skipped,
    )


def write_edge_list(g: HeteroGraph, path) -> None:
    xn = g.x_names or tuple(f"x{i}" for i in range(g.d))
    hn = g.h_names or tuple(f"h{i}" for i in range(g.m))

    def ref(i):
        return ("X", xn[i]) if i < g.d else ("H", hn[i - g.d])

    lines = ["# src_type\tsrc_id\tdst_type\tdst_id"]
    for kind in EDGE_KINDS:
        for u, v in g.typed_edges()[kind]:
            a, b = ref(u), ref(v)
            lines.append(f"{a[0]}\t{a[1]}\t{b[0]}\t{b[1]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_vocabulary(names, path) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")


@dataclass(frozen=True)
class HFeatures:
    values: np.ndarray
    seed: int


def init_h_features(m: int, f: int, seed: int) -> HFeatures:
    """m x f i.i.d. standard normal draws; drawn once per model and kept fixed."""
    if m < 1 or f < 1:
        raise ValueError(f"need m, f >= 1, got m={m}, f={f}")
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((m, f))
    vals.setflags(write=False)
    return HFeatures(vals, seed)
