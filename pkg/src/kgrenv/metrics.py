"""Graph views and the spectral / coverage diagnostics computed on them.

All logarithms are natural. Metrics see the undirected 0/1 view of the
promoted relation set; staged candidates are invisible here. Everything is
pure and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .kernels import coverage_from_counts, hop_counts

__all__ = [
    "GraphView",
    "SpectralParams",
    "SpectralTerms",
    "spectral_terms",
    "von_neumann_entropy",
    "coverage",
    "degree_entropy",
    "temporal_consistency",
    "episode_coverage_proxy",
]

_EIG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralParams:
    """Bundle of the spectral/coverage knobs used across modules.

    eps shifts log det(L + eps I); mu shifts the density matrix; kappa is the
    coverage saturation rate in (0, 1); h the neighborhood radius; beta_t the
    temporal sharpness; lambda_spec the spectral regularizer weight used by
    retrieval scoring. Defaults are configuration, not ground truth.
    """

    eps: float = 0.01
    mu: float = 0.01
    kappa: float = 0.5
    h: int = 1
    beta_t: float = 1.0
    lambda_spec: float = 0.1

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if self.h < 1:
            raise ValueError("h must be >= 1")
        if not self.beta_t > 0:
            raise ValueError("beta_t must be positive")


@dataclass(frozen=True)
class SpectralTerms:
    tr_pinv: float
    logdet: float


class GraphView:
    """Immutable undirected 0/1 view over a fixed, sorted vertex order."""

    __slots__ = ("ids", "adj")

    def __init__(self, ids: Sequence[str], adj: np.ndarray):
        ids = tuple(ids)
        adj = np.asarray(adj, dtype=np.uint8)
        if adj.shape != (len(ids), len(ids)):
            raise ValueError("adjacency shape does not match vertex count")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate vertex ids")
        self.ids = ids
        self.adj = adj
        adj.setflags(write=False)

    @classmethod
    def from_edges(cls, ids: Iterable[str], edges: Iterable[tuple[str, str]]) -> "GraphView":
        order = tuple(sorted(set(ids)))
        index = {v: i for i, v in enumerate(order)}
        adj = np.zeros((len(order), len(order)), np.uint8)
        for u, v in edges:
            if u not in index or v not in index:
                raise ValueError(f"edge endpoint not in vertex set: {(u, v)}")
            adj[index[u], index[v]] = 1
            adj[index[v], index[u]] = 1
        return cls(order, adj)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1).astype(np.int64)

    def edge_count(self) -> int:
        a = self.adj
        return int((a.sum() + np.trace(a)) // 2)

    def laplacian(self) -> np.ndarray:
        a = self.adj.astype(np.float64)
        np.fill_diagonal(a, 0.0)  # self-loops cancel in D - A
        return np.diag(a.sum(axis=1)) - a

    def normalized_laplacian(self) -> np.ndarray:
        a = self.adj.astype(np.float64)
        np.fill_diagonal(a, 0.0)
        d = a.sum(axis=1)
        dinv = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
        lap = -a * dinv[:, None] * dinv[None, :]
        np.fill_diagonal(lap, np.where(d > 0, 1.0, 0.0))
        return lap


def _require_nonempty(view: GraphView) -> None:
    if view.n == 0:
        raise ValueError("graph has no vertices")


def spectral_terms(view: GraphView, eps: float) -> SpectralTerms:
    """tr of the Laplacian pseudoinverse and log det(L + eps I).

    The pseudoinverse trace sums reciprocals of nonzero eigenvalues, so it is
    well defined for disconnected graphs and 0.0 for the edgeless one. The
    logdet comes back unweighted; callers apply their own 1/2 factor.
    """
    _require_nonempty(view)
    if not eps > 0:
        raise ValueError("eps must be positive")
    w = np.linalg.eigvalsh(view.laplacian())
    w = np.clip(w, 0.0, None)
    tol = _EIG_TOL * max(1.0, float(w[-1]))
    nz = w[w > tol]
    tr_pinv = float(np.sum(1.0 / nz)) if nz.size else 0.0
    logdet = float(np.sum(np.log(w + eps)))
    return SpectralTerms(tr_pinv=tr_pinv, logdet=logdet)


def von_neumann_entropy(view: GraphView, mu: float, normalized: bool = False) -> float:
    """-tr(rho log rho) for rho = (L + mu I) / tr(L + mu I). Range [0, ln n].

    `normalized=True` swaps in the degree-normalized Laplacian; the default is
    the raw combinatorial one.
    """
    _require_nonempty(view)
    if not mu > 0:
        raise ValueError("mu must be positive")
    lap = view.normalized_laplacian() if normalized else view.laplacian()
    w = np.clip(np.linalg.eigvalsh(lap), 0.0, None)
    shifted = w + mu
    p = shifted / shifted.sum()
    ent = float(-np.sum(p * np.log(p)))
    return max(0.0, ent)


def coverage(view: GraphView, kappa: float, h: int) -> float:
    """Saturating h-hop coverage sum_v 1 - (1 - kappa)^{|N(v;h)|}, v excluded."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    if h < 1:
        raise ValueError("h must be >= 1")
    if view.n == 0:
        return 0.0
    counts = hop_counts(view.adj, h)
    return coverage_from_counts(counts, kappa)


def degree_entropy(view: GraphView) -> float:
    """Shannon entropy of the degree distribution p_v = d_v / sum(d).

    Edgeless graphs return 0 by convention (empty sum after the p > 0 filter).
    """
    d = view.degrees.astype(np.float64)
    tot = d.sum()
    if tot <= 0:
        return 0.0
    p = d[d > 0] / tot
    return float(-np.sum(p * np.log(p)))


def temporal_consistency(prev: GraphView, cur: GraphView, beta_t: float) -> float:
    """exp(-beta_t * ||L_cur - L_prev||_F) on the padded union vertex order."""
    if not beta_t > 0:
        raise ValueError("beta_t must be positive")
    union = tuple(sorted(set(prev.ids) | set(cur.ids)))
    lp = _padded_laplacian(prev, union)
    lc = _padded_laplacian(cur, union)
    diff = float(np.linalg.norm(lc - lp, "fro"))
    return float(np.exp(-beta_t * diff))


def _padded_laplacian(view: GraphView, union: tuple[str, ...]) -> np.ndarray:
    index = {v: i for i, v in enumerate(union)}
    n = len(union)
    adj = np.zeros((n, n), np.float64)
    src = view.adj.astype(np.float64)
    np.fill_diagonal(src, 0.0)
    take = [index[v] for v in view.ids]
    adj[np.ix_(take, take)] = src
    return np.diag(adj.sum(axis=1)) - adj


def episode_coverage_proxy(prev_count: int, cur_count: int) -> float:
    """Relative growth (cur - prev) / max(1, prev)."""
    if prev_count < 0 or cur_count < 0:
        raise ValueError("counts must be >= 0")
    return (cur_count - prev_count) / max(1.0, float(prev_count))
