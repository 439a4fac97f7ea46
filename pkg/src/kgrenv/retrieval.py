"""Gibbs retrieval over connected subgraphs and the graph-readout pass.

Scores mix semantic alignment (inner product with a mean member embedding)
with spectral coherence (effective-resistance and ridged log-determinant
terms). The candidate family is every connected edge-subset up to a size
cap; the Monte Carlo path proposes uniformly from that family by rejection
so the plain average of exp(beta * score) estimates the per-candidate
partition value (1 exactly at beta = 0).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .metrics import GraphView, spectral_terms
from .store import KnowledgeGraph, graph_view

__all__ = [
    "EmbeddingSpace",
    "RetrievalParams",
    "ReadoutParams",
    "Subgraph",
    "enumerate_subgraphs",
    "subgraph_score",
    "retrieval_distribution",
    "sample_subgraphs",
    "gnn_forward",
    "readout",
    "save_bundle",
    "load_bundle",
]

TRIGRAM_DIM = 512
ENUMERATION_CAP = 4096


def _hash_rng(seed: int, tag: str) -> np.random.Generator:
    digest = hashlib.blake2b(f"{seed}\x1f{tag}".encode("utf-8"), digest_size=8)
    return np.random.default_rng(int.from_bytes(digest.digest(), "big"))


def _trigram_counts(text: str) -> np.ndarray:
    s = text.lower()
    grams = [s[i : i + 3] for i in range(len(s) - 2)] if len(s) >= 3 else ([s] if s else [])
    counts = np.zeros(TRIGRAM_DIM, dtype=np.float64)
    for g in grams:
        digest = hashlib.blake2b(g.encode("utf-8"), digest_size=4)
        counts[int.from_bytes(digest.digest(), "big") % TRIGRAM_DIM] += 1.0
    return counts


class EmbeddingSpace:
    """Deterministic seeded embeddings: per-vertex unit vectors derived from
    the vertex id (stable under graph growth) plus a query projection of a
    bag-of-character-trigram vector."""

    __slots__ = ("d", "seed", "node_embeddings", "_proj")

    def __init__(self, d: int, seed: int, node_embeddings: dict[str, np.ndarray]):
        if d < 1:
            raise ValueError("d must be >= 1")
        for vid, vec in node_embeddings.items():
            if vec.shape != (d,):
                raise ValueError(f"embedding for {vid!r} has wrong length")
        self.d = d
        self.seed = seed
        self.node_embeddings = node_embeddings
        self._proj = _hash_rng(seed, "query-projection").standard_normal(
            (TRIGRAM_DIM, d)
        ) / math.sqrt(TRIGRAM_DIM)

    @classmethod
    def seeded(cls, vertex_ids: Iterable[str], d: int, seed: int) -> "EmbeddingSpace":
        emb: dict[str, np.ndarray] = {}
        for vid in sorted(set(vertex_ids)):
            vec = _hash_rng(seed, f"node\x1f{vid}").standard_normal(d)
            emb[vid] = vec / np.linalg.norm(vec)
        return cls(d, seed, emb)

    def encode(self, text: str) -> np.ndarray:
        vec = _trigram_counts(text) @ self._proj
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def embedding(self, vid: str) -> np.ndarray:
        if vid not in self.node_embeddings:
            raise KeyError(f"no embedding for vertex {vid!r}")
        return self.node_embeddings[vid]

    def to_record(self) -> dict:
        return {
            "kind": "embedding_space",
            "d": self.d,
            "seed": self.seed,
            "vertex_ids": sorted(self.node_embeddings),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "EmbeddingSpace":
        return cls.seeded(rec["vertex_ids"], int(rec["d"]), int(rec["seed"]))


@dataclass(frozen=True)
class RetrievalParams:
    beta: float = 1.0
    lambda_spec: float = 0.1
    eps: float = 0.01
    max_size: int = 3
    M: int = 1000

    def __post_init__(self) -> None:
        if not self.beta >= 0.0:
            raise ValueError("beta must be >= 0")
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if self.max_size < 1:
            raise ValueError("max_size must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")

    def to_record(self) -> dict:
        return {
            "kind": "retrieval_params",
            "beta": self.beta,
            "lambda_spec": self.lambda_spec,
            "eps": self.eps,
            "max_size": self.max_size,
            "M": self.M,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "RetrievalParams":
        return cls(
            beta=float(rec["beta"]),
            lambda_spec=float(rec["lambda_spec"]),
            eps=float(rec["eps"]),
            max_size=int(rec["max_size"]),
            M=int(rec["M"]),
        )


@dataclass(frozen=True, eq=False)
class ReadoutParams:
    W_in: np.ndarray  # d x d_hid
    W_out: np.ndarray  # d_hid x d
    b: np.ndarray  # d_hid
    W_Q: np.ndarray  # d x d_k
    W_K: np.ndarray  # d x d_k
    W_V: np.ndarray  # 2d x d
    seed: int | None = None

    def __post_init__(self) -> None:
        d, d_hid = self.W_in.shape
        if self.W_out.shape != (d_hid, d):
            raise ValueError("W_out shape inconsistent with W_in")
        if self.b.shape != (d_hid,):
            raise ValueError("b shape inconsistent with W_in")
        if self.W_Q.shape[0] != d or self.W_K.shape[0] != d:
            raise ValueError("W_Q/W_K must have d rows")
        if self.W_Q.shape[1] != self.W_K.shape[1]:
            raise ValueError("W_Q and W_K must share the key dimension")
        if self.W_V.shape != (2 * d, d):
            raise ValueError("W_V must be 2d x d")

    @property
    def d(self) -> int:
        return self.W_in.shape[0]

    @classmethod
    def seeded(cls, d: int, d_hid: int, d_k: int, seed: int) -> "ReadoutParams":
        rng = np.random.default_rng(seed)
        return cls(
            W_in=rng.standard_normal((d, d_hid)) / math.sqrt(d),
            W_out=rng.standard_normal((d_hid, d)) / math.sqrt(d_hid),
            b=rng.standard_normal(d_hid),
            W_Q=rng.standard_normal((d, d_k)) / math.sqrt(d),
            W_K=rng.standard_normal((d, d_k)) / math.sqrt(d),
            W_V=rng.standard_normal((2 * d, d)) / math.sqrt(2 * d),
            seed=seed,
        )

    def to_record(self) -> dict:
        if self.seed is None:
            raise ValueError("only seeded parameter bundles serialize")
        return {
            "kind": "readout_params",
            "d": int(self.W_in.shape[0]),
            "d_hid": int(self.W_in.shape[1]),
            "d_k": int(self.W_Q.shape[1]),
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "ReadoutParams":
        return cls.seeded(int(rec["d"]), int(rec["d_hid"]), int(rec["d_k"]), int(rec["seed"]))


@dataclass(frozen=True)
class Subgraph:
    edges: frozenset
    extra_vertices: tuple = ()

    @property
    def vertices(self) -> tuple[str, ...]:
        return tuple(sorted({v for e in self.edges for v in e} | set(self.extra_vertices)))

    def view(self) -> GraphView:
        return GraphView.from_edges(self.vertices, self.edges)

    @classmethod
    def of(
        cls, edges: Iterable[tuple[str, str]], vertices: Iterable[str] = ()
    ) -> "Subgraph":
        canon = frozenset((min(u, v), max(u, v)) for u, v in edges)
        extra = tuple(sorted(set(vertices) - {v for e in canon for v in e}))
        if not canon and not extra:
            raise ValueError("empty subgraph")
        return cls(canon, extra)


def _as_view(g) -> GraphView:
    if isinstance(g, GraphView):
        return g
    if isinstance(g, KnowledgeGraph):
        return graph_view(g)
    raise TypeError("expected KnowledgeGraph or GraphView")


def _candidate_edges(view: GraphView) -> list[tuple[str, str]]:
    out = set()
    n = view.n
    for i in range(n):
        for j in range(i + 1, n):
            if view.adj[i, j]:
                out.add((view.ids[i], view.ids[j]))
    return sorted(out)


def _edge_adjacency(edges: Sequence[tuple[str, str]]) -> list[set[int]]:
    by_vertex: dict[str, list[int]] = {}
    for i, (u, v) in enumerate(edges):
        by_vertex.setdefault(u, []).append(i)
        by_vertex.setdefault(v, []).append(i)
    adj: list[set[int]] = [set() for _ in edges]
    for members in by_vertex.values():
        for i, j in itertools.combinations(members, 2):
            adj[i].add(j)
            adj[j].add(i)
    return adj


def _connected_indices(indices: Sequence[int], adj: list[set[int]]) -> bool:
    todo = {int(i) for i in indices}
    stack = [next(iter(todo))]
    seen = set()
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        stack.extend(adj[i] & todo - seen)
    return seen == todo


def enumerate_subgraphs(
    g, max_size: int, cap: int = ENUMERATION_CAP
) -> list[Subgraph]:
    """Every connected edge-subset with 1..max_size edges, each exactly once
    (extension-set enumeration on the line graph); deterministic order."""
    view = _as_view(g)
    edges = _candidate_edges(view)
    adj = _edge_adjacency(edges)
    out: list[Subgraph] = []

    def emit(sub: tuple[int, ...]) -> None:
        out.append(Subgraph.of([edges[i] for i in sub]))
        if len(out) > cap:
            raise ValueError(
                f"more than {cap} candidate subgraphs; use sample_subgraphs"
            )

    def extend(sub: tuple[int, ...], ext: set[int], root: int) -> None:
        emit(sub)
        if len(sub) == max_size:
            return
        ext = set(ext)
        while ext:
            j = min(ext)
            ext.remove(j)
            grown = {
                k
                for k in adj[j]
                if k > root and k not in sub and all(k not in adj[s] for s in sub)
            }
            extend(sub + (j,), ext | grown, root)

    for i in range(len(edges)):
        extend((i,), {j for j in adj[i] if j > i}, i)
    return out


def subgraph_score(
    q: np.ndarray, H: Subgraph, space: EmbeddingSpace, p: RetrievalParams
) -> float:
    members = np.stack([space.embedding(v) for v in H.vertices])
    phi = members.mean(axis=0)
    terms = spectral_terms(H.view(), p.eps)
    return float(q @ phi) - p.lambda_spec * (terms.tr_pinv + 0.5 * terms.logdet)


def retrieval_distribution(
    query: str,
    g,
    space: EmbeddingSpace,
    p: RetrievalParams,
    cap: int = ENUMERATION_CAP,
) -> dict[Subgraph, float]:
    candidates = enumerate_subgraphs(g, p.max_size, cap)
    if not candidates:
        raise ValueError("no candidate subgraphs")
    q = space.encode(query)
    scores = np.array([subgraph_score(q, H, space, p) for H in candidates])
    logits = p.beta * scores
    logits -= logits.max()
    weights = np.exp(logits)
    probs = weights / weights.sum()
    return {H: float(pr) for H, pr in zip(candidates, probs)}


def sample_subgraphs(
    query: str,
    g,
    space: EmbeddingSpace,
    p: RetrievalParams,
    seed: int,
) -> tuple[list[Subgraph], float]:
    """Uniform proposals over the connected family (binomial-stratified
    rejection), then self-normalized resampling toward the Gibbs weights.
    z_hat = mean of exp(beta * score) over the proposals: the per-candidate
    partition value, exactly 1 at beta = 0."""
    view = _as_view(g)
    edges = _candidate_edges(view)
    if not edges:
        raise ValueError("no candidate subgraphs")
    adj = _edge_adjacency(edges)
    m = len(edges)
    K = min(p.max_size, m)
    size_weights = np.array([math.comb(m, k) for k in range(1, K + 1)], dtype=np.float64)
    size_probs = size_weights / size_weights.sum()
    rng = np.random.default_rng(seed)
    q = space.encode(query)

    proposals: list[Subgraph] = []
    scores: list[float] = []
    stalls = 0
    while len(proposals) < p.M:
        k = 1 + int(rng.choice(K, p=size_probs))
        idx = rng.choice(m, size=k, replace=False)
        if not _connected_indices(idx, adj):
            stalls += 1
            if stalls > 200_000:
                raise RuntimeError("uniform subgraph proposal stalled; graph too sparse")
            continue
        H = Subgraph.of([edges[i] for i in idx])
        proposals.append(H)
        scores.append(subgraph_score(q, H, space, p))

    weights = np.exp(p.beta * (np.array(scores) - max(scores)))
    z_hat = float(np.mean(np.exp(p.beta * np.array(scores))))
    probs = weights / weights.sum()
    picks = rng.choice(p.M, size=p.M, p=probs)
    return [proposals[int(i)] for i in picks], z_hat


def gnn_forward(H: Subgraph, space: EmbeddingSpace, rp: ReadoutParams) -> np.ndarray:
    X = np.stack([space.embedding(v) for v in H.vertices])
    if X.shape[1] != rp.d:
        raise ValueError("embedding dimension does not match readout parameters")
    L = H.view().laplacian()
    hidden = np.maximum(0.0, L @ X @ rp.W_in + rp.b)
    return (hidden @ rp.W_out).mean(axis=0)


def readout(
    q: np.ndarray, H: Subgraph, space: EmbeddingSpace, rp: ReadoutParams
) -> np.ndarray:
    g_vec = gnn_forward(H, space, rp)
    if q.shape != (rp.d,):
        raise ValueError("query dimension does not match readout parameters")
    Q = q @ rp.W_Q  # 1 x d_k
    K = (g_vec @ rp.W_K)[None, :]  # 1 x d_k
    V = (np.concatenate([g_vec, q]) @ rp.W_V)[None, :]  # 1 x d
    logits = (Q @ K.T) / math.sqrt(rp.W_Q.shape[1])
    logits = np.atleast_1d(logits) - np.max(logits)
    att = np.exp(logits)
    att = att / att.sum()
    return att @ V


def save_bundle(
    path: str,
    space: EmbeddingSpace,
    params: RetrievalParams,
    readout_params: ReadoutParams,
) -> None:
    records = [space.to_record(), params.to_record(), readout_params.to_record()]
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_bundle(path: str) -> tuple[EmbeddingSpace, RetrievalParams, ReadoutParams]:
    space = params = rparams = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "embedding_space":
                space = EmbeddingSpace.from_record(rec)
            elif kind == "retrieval_params":
                params = RetrievalParams.from_record(rec)
            elif kind == "readout_params":
                rparams = ReadoutParams.from_record(rec)
            else:
                raise ValueError(f"unknown record kind {kind!r}")
    if space is None or params is None or rparams is None:
        raise ValueError("bundle is missing a record")
    return space, params, rparams
