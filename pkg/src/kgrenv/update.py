"""Graph update operator: greedy local search plus exhaustive oracles.

Edges are keyed triples ``(src, dst, rel_type)``.  The update objective
balances a smoothness term against accepted-candidate confidence, a
retention penalty on unconfirmed old edges, and squared constraint
slacks.  ``cover_select`` maximizes the coverage gain of a bounded set
of candidate edges, greedily or by brute force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .kernels import scan_masks
from .metrics import GraphView, coverage

EdgeKey = tuple[str, str, str]

ConstraintFn = Callable[[Sequence[EdgeKey]], Iterable[float]]

EXHAUSTIVE_TOGGLE_LIMIT = 16
EXHAUSTIVE_SUBSET_LIMIT = 10**6


@dataclass(frozen=True, order=True)
class EdgeCandidate:
    src: str
    dst: str
    rel_type: str
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence out of range")

    @property
    def key(self) -> EdgeKey:
        return (self.src, self.dst, self.rel_type)


class PerEdgeConstraint:
    """Constraint emitting one unit slack per violating edge."""

    def __init__(self, name: str, pred: Callable[[EdgeKey], bool]) -> None:
        self.name = name
        self._pred = pred

    def __call__(self, edges: Sequence[EdgeKey]) -> tuple[float, ...]:
        return tuple(1.0 for e in edges if self._pred(e))

    def slack(self, edge: EdgeKey) -> float:
        return 1.0 if self._pred(edge) else 0.0


class DuplicateKeyConstraint:
    """Unit slack for each repeated occurrence of an edge key."""

    name = "duplicate_key"

    def __call__(self, edges: Sequence[EdgeKey]) -> tuple[float, ...]:
        seen: set[EdgeKey] = set()
        out = []
        for e in edges:
            if e in seen:
                out.append(1.0)
            seen.add(e)
        return tuple(out)


def default_constraints(
    relation_types: Iterable[str] | None = None,
    selfloop_whitelist: Iterable[str] = (),
) -> tuple[ConstraintFn, ...]:
    rel_types = None if relation_types is None else frozenset(relation_types)
    loops_ok = frozenset(selfloop_whitelist)

    def bad_type(e: EdgeKey) -> bool:
        return rel_types is not None and e[2] not in rel_types

    def self_loop(e: EdgeKey) -> bool:
        return e[0] == e[1] and e[2] not in loops_ok

    return (
        PerEdgeConstraint("invalid_relation_type", bad_type),
        PerEdgeConstraint("self_loop", self_loop),
        DuplicateKeyConstraint(),
    )


@dataclass(frozen=True)
class UpdateParams:
    kappa_s: float = 1.0
    tau: float = 0.1
    xi: float = 0.1
    lambda_contr: float = 0.1
    constraints: tuple[ConstraintFn, ...] = ()

    def __post_init__(self) -> None:
        for name in ("kappa_s", "tau", "xi", "lambda_contr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        object.__setattr__(self, "constraints", tuple(self.constraints))


def constraint_penalty(
    edges: Sequence[EdgeKey], constraints: Sequence[ConstraintFn]
) -> float:
    total = 0.0
    for fn in constraints:
        for s in fn(edges):
            total += max(0.0, float(s)) ** 2
    return total


def graph_distance(g1: Iterable[EdgeKey], g2: Iterable[EdgeKey]) -> int:
    return len(frozenset(g1) ^ frozenset(g2))


def _candidate_table(cands: Iterable[EdgeCandidate]) -> dict[EdgeKey, float]:
    by_key: dict[EdgeKey, float] = {}
    for c in cands:
        k = c.key
        if k not in by_key or c.confidence > by_key[k]:
            by_key[k] = c.confidence
    return by_key


def update_objective(
    g: Iterable[EdgeKey],
    g_t: Iterable[EdgeKey],
    cands: Iterable[EdgeCandidate],
    ages: Mapping[EdgeKey, float],
    p: UpdateParams,
) -> float:
    gset = frozenset(g)
    cur = frozenset(g_t)
    by_key = _candidate_table(cands)
    if not gset <= cur | by_key.keys():
        raise ValueError("infeasible graph")
    smooth = math.exp(-p.kappa_s * len(gset ^ cur))
    prod = 1.0
    accepted_sum = 0.0
    for k in sorted(gset & by_key.keys()):
        prod *= by_key[k]
        accepted_sum += by_key[k]
    retained = 0.0
    for k in sorted(gset - by_key.keys()):
        retained += math.exp(-p.xi * float(ages[k]))
    penalty = constraint_penalty(sorted(gset), p.constraints)
    return smooth * prod + accepted_sum - p.tau * retained - p.lambda_contr * penalty


def _separable(constraints: Sequence[ConstraintFn]) -> bool:
    return all(
        isinstance(fn, (PerEdgeConstraint, DuplicateKeyConstraint))
        for fn in constraints
    )


def _edge_slack_sq(edge: EdgeKey, constraints: Sequence[ConstraintFn]) -> float:
    total = 0.0
    for fn in constraints:
        if isinstance(fn, PerEdgeConstraint):
            total += max(0.0, fn.slack(edge)) ** 2
    return total


def apply_update(
    g_t: Iterable[EdgeKey],
    cands: Iterable[EdgeCandidate],
    ages: Mapping[EdgeKey, float],
    p: UpdateParams,
    mode: str = "greedy",
) -> tuple[frozenset[EdgeKey], float]:
    cur = frozenset(g_t)
    by_key = _candidate_table(cands)
    items = sorted(cur | by_key.keys())
    cand_list = [EdgeCandidate(*k, confidence=v) for k, v in sorted(by_key.items())]

    def objective(edges: frozenset[EdgeKey]) -> float:
        return update_objective(edges, cur, cand_list, ages, p)

    if mode == "exhaustive":
        if len(items) > EXHAUSTIVE_TOGGLE_LIMIT:
            raise ValueError("too many toggleable edges for exhaustive mode")
        if not items:
            return frozenset(), objective(frozenset())
        if _separable(p.constraints):
            conf = np.array([by_key.get(e, 0.0) for e in items], dtype=np.float64)
            is_cand = np.array([e in by_key for e in items], dtype=np.bool_)
            age_pen = np.array(
                [
                    0.0
                    if e in by_key
                    else p.tau * math.exp(-p.xi * float(ages[e]))
                    for e in items
                ],
                dtype=np.float64,
            )
            viol = np.array(
                [_edge_slack_sq(e, p.constraints) for e in items], dtype=np.float64
            )
            cur_mask = 0
            for i, e in enumerate(items):
                if e in cur:
                    cur_mask |= 1 << i
            best_mask, best_obj = scan_masks(
                conf, is_cand, age_pen, viol, p.kappa_s, p.lambda_contr, cur_mask
            )
            chosen = frozenset(
                items[i] for i in range(len(items)) if best_mask >> i & 1
            )
            return chosen, best_obj
        best_set = frozenset()
        best_obj = objective(best_set)
        for mask in range(1, 1 << len(items)):
            edges = frozenset(
                items[i] for i in range(len(items)) if mask >> i & 1
            )
            obj = objective(edges)
            if obj > best_obj:
                best_set, best_obj = edges, obj
        return best_set, best_obj

    if mode != "greedy":
        raise ValueError("unknown mode")

    state = set(cur) | {k for k, c in by_key.items() if c >= 0.5}
    state_obj = objective(frozenset(state))
    while True:
        best_obj = state_obj
        best_edge: EdgeKey | None = None
        for e in items:
            flipped = frozenset(state ^ {e})
            obj = objective(flipped)
            if obj > best_obj:
                best_obj, best_edge = obj, e
        if best_edge is None:
            return frozenset(state), state_obj
        state ^= {best_edge}
        state_obj = best_obj


def _extended_adjacency(
    g: GraphView, cands: Sequence[EdgeCandidate]
) -> tuple[list[str], np.ndarray, dict[str, int]]:
    ids = sorted(set(g.ids) | {c.src for c in cands} | {c.dst for c in cands})
    index = {v: i for i, v in enumerate(ids)}
    adj = np.zeros((len(ids), len(ids)), dtype=np.int8)
    base = {v: i for i, v in enumerate(g.ids)}
    for a in g.ids:
        for b in g.ids:
            if g.adj[base[a], base[b]]:
                adj[index[a], index[b]] = 1
    return ids, adj, index


def _cov_with(
    adj: np.ndarray,
    index: Mapping[str, int],
    chosen: Iterable[EdgeCandidate],
    kappa: float,
    h: int,
) -> float:
    work = adj.copy()
    for c in chosen:
        i, j = index[c.src], index[c.dst]
        if i != j:
            work[i, j] = 1
            work[j, i] = 1
    ids = [str(i) for i in range(work.shape[0])]
    return coverage(GraphView(ids, work), kappa, h)


def coverage_gain(
    g: GraphView, selected: Sequence[EdgeCandidate], kappa: float, h: int
) -> float:
    """Coverage increase of adding the selected edges to g."""
    all_cands = list(selected)
    _, adj, index = _extended_adjacency(g, all_cands)
    return _cov_with(adj, index, all_cands, kappa, h) - _cov_with(
        adj, index, (), kappa, h
    )


def cover_select(
    g: GraphView,
    cands: Sequence[EdgeCandidate],
    k: int,
    kappa: float,
    h: int,
    mode: str = "greedy",
) -> list[EdgeCandidate]:
    if k < 0:
        raise ValueError("k must be >= 0")
    uniq: dict[EdgeKey, EdgeCandidate] = {}
    for c in sorted(cands, key=lambda c: (c.key, -c.confidence)):
        uniq.setdefault(c.key, c)
    pool = [uniq[key] for key in sorted(uniq)]
    budget = min(k, len(pool))
    if budget == 0:
        return []
    _, adj, index = _extended_adjacency(g, pool)

    if mode == "greedy":
        chosen: list[EdgeCandidate] = []
        remaining = list(pool)
        for _ in range(budget):
            best_val = -math.inf
            best_cand: EdgeCandidate | None = None
            for c in remaining:
                val = _cov_with(adj, index, chosen + [c], kappa, h)
                if val > best_val:
                    best_val, best_cand = val, c
            assert best_cand is not None
            chosen.append(best_cand)
            remaining.remove(best_cand)
        return chosen

    if mode != "exhaustive":
        raise ValueError("unknown mode")

    if math.comb(len(pool), budget) > EXHAUSTIVE_SUBSET_LIMIT:
        raise ValueError("too many subsets for exhaustive mode")
    best_val = -math.inf
    best_subset: tuple[EdgeCandidate, ...] = ()
    for size in range(budget + 1):
        for subset in combinations(pool, size):
            val = _cov_with(adj, index, subset, kappa, h)
            if val > best_val:
                best_val, best_subset = val, subset
    return list(best_subset)


@dataclass(frozen=True)
class ContractionReport:
    kappa_hat: float | None
    ratios: tuple[float, ...]
    trials: int

    def histogram(self, bins: int = 10) -> list[tuple[float, float, int]]:
        if not self.ratios:
            return []
        counts, edges = np.histogram(np.array(self.ratios), bins=bins)
        return [
            (float(edges[i]), float(edges[i + 1]), int(counts[i]))
            for i in range(len(counts))
        ]


def estimate_update_contraction(
    p: UpdateParams, trials: int, seed: int
) -> ContractionReport:
    if trials < 0:
        raise ValueError("trials must be >= 0")
    rng = np.random.default_rng(seed)
    nodes = [f"n{i}" for i in range(6)]
    pool = [
        (a, b, "rel") for a in nodes for b in nodes if a < b
    ]
    ratios: list[float] = []
    for _ in range(trials):
        size_a = int(rng.integers(0, 6))
        g_a = frozenset(
            pool[i] for i in rng.choice(len(pool), size=size_a, replace=False)
        )
        flips = rng.choice(len(pool), size=int(rng.integers(1, 4)), replace=False)
        g_b = set(g_a)
        for i in flips:
            g_b ^= {pool[i]}
        g_b = frozenset(g_b)
        n_cands = int(rng.integers(1, 5))
        cand_idx = rng.choice(len(pool), size=n_cands, replace=False)
        cands = [
            EdgeCandidate(*pool[i], confidence=float(rng.uniform(0.1, 1.0)))
            for i in cand_idx
        ]
        ages = {e: float(rng.uniform(0.0, 60.0)) for e in pool}
        dist = graph_distance(g_a, g_b)
        if dist == 0:
            continue
        out_a, _ = apply_update(g_a, cands, ages, p, mode="exhaustive")
        out_b, _ = apply_update(g_b, cands, ages, p, mode="exhaustive")
        ratios.append(graph_distance(out_a, out_b) / dist)
    kappa_hat = max(ratios) if ratios else None
    return ContractionReport(kappa_hat, tuple(ratios), trials)
