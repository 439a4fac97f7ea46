"""Hot numeric kernels: hop-neighborhood counts, coverage sums, subset scans.

Two interchangeable backends. The numba path JIT-compiles per-vertex BFS and
the exhaustive mask scan; the numpy path uses boolean matrix powers and
vectorized mask tables. Selection: env var ``KGR_NUMBA=0`` forces numpy,
otherwise numba is used when importable. Both paths are exercised in CI via
the env flag; ``benchmarks/bench_kernels.py`` times them side by side.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "hop_counts",
    "coverage_from_counts",
    "coverage_value",
    "scan_masks",
    "warmup",
]


def _numba_wanted() -> bool:
    flag = os.environ.get("KGR_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


HAS_NUMBA = False
if _numba_wanted():
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations


def _hop_counts_np(adj: np.ndarray, h: int) -> np.ndarray:
    a = adj != 0
    reach = a.copy()
    au8 = a.astype(np.uint8)
    for _ in range(h - 1):
        reach = reach | ((reach.astype(np.uint8) @ au8) > 0)
    np.fill_diagonal(reach, False)
    return reach.sum(axis=1).astype(np.int64)


def _scan_masks_np(
    conf: np.ndarray,
    is_cand: np.ndarray,
    age_pen: np.ndarray,
    viol: np.ndarray,
    kappa_s: float,
    lambda_contr: float,
    cur_mask: int,
) -> tuple[int, float]:
    k = conf.shape[0]
    n_masks = 1 << k
    masks = np.arange(n_masks, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)
    cur_bits = ((cur_mask >> np.arange(k)) & 1).astype(bool)
    dist = (bits != cur_bits).sum(axis=1)
    cand_on = bits & is_cand
    prod = np.where(cand_on, conf, 1.0).prod(axis=1)
    sum_conf = np.where(cand_on, conf, 0.0).sum(axis=1)
    sum_age = np.where(bits & ~is_cand, age_pen, 0.0).sum(axis=1)
    sum_viol = np.where(bits, viol, 0.0).sum(axis=1)
    obj = np.exp(-kappa_s * dist) * prod + sum_conf - sum_age - lambda_contr * sum_viol
    best = int(np.argmax(obj))  # first occurrence wins on ties
    return best, float(obj[best])


# ---------------------------------------------------------------------------
# numba implementations

if HAS_NUMBA:

    @njit(cache=True)
    def _hop_counts_nb(adj: np.ndarray, h: int) -> np.ndarray:  # pragma: no cover
        n = adj.shape[0]
        out = np.zeros(n, np.int64)
        dist = np.empty(n, np.int64)
        queue = np.empty(n, np.int64)
        for s in range(n):
            for i in range(n):
                dist[i] = -1
            dist[s] = 0
            queue[0] = s
            head = 0
            tail = 1
            cnt = 0
            while head < tail:
                u = queue[head]
                head += 1
                if dist[u] >= h:
                    continue
                for v in range(n):
                    if adj[u, v] != 0 and dist[v] < 0:
                        dist[v] = dist[u] + 1
                        queue[tail] = v
                        tail += 1
                        cnt += 1
            out[s] = cnt
        return out

    @njit(cache=True)
    def _scan_masks_nb(
        conf: np.ndarray,
        is_cand: np.ndarray,
        age_pen: np.ndarray,
        viol: np.ndarray,
        kappa_s: float,
        lambda_contr: float,
        cur_mask: int,
    ) -> tuple[int, float]:  # pragma: no cover
        k = conf.shape[0]
        n_masks = 1 << k
        best_mask = 0
        best_obj = -1e300
        for m in range(n_masks):
            dist = 0
            prod = 1.0
            sum_conf = 0.0
            sum_age = 0.0
            sum_viol = 0.0
            for i in range(k):
                on = (m >> i) & 1
                was = (cur_mask >> i) & 1
                if on != was:
                    dist += 1
                if on:
                    if is_cand[i]:
                        prod *= conf[i]
                        sum_conf += conf[i]
                    else:
                        sum_age += age_pen[i]
                    sum_viol += viol[i]
            obj = np.exp(-kappa_s * dist) * prod + sum_conf - sum_age - lambda_contr * sum_viol
            if obj > best_obj:
                best_obj = obj
                best_mask = m
        return best_mask, best_obj


# ---------------------------------------------------------------------------
# public API


def hop_counts(adj: np.ndarray, h: int) -> np.ndarray:
    """Per-vertex count of distinct vertices within <= h hops, self excluded.

    adj: square symmetric 0/1 matrix (any integer dtype).
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    a = np.ascontiguousarray(adj, dtype=np.uint8)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if a.shape[0] == 0:
        return np.zeros(0, np.int64)
    if HAS_NUMBA:
        return _hop_counts_nb(a, h)
    return _hop_counts_np(a, h)


def coverage_from_counts(counts: np.ndarray, kappa: float) -> float:
    """Saturating coverage sum_v 1 - (1-kappa)^{|N(v;h)|}."""
    return float(np.sum(1.0 - np.power(1.0 - kappa, counts)))


def coverage_value(adj: np.ndarray, kappa: float, h: int) -> float:
    return coverage_from_counts(hop_counts(adj, h), kappa)


def scan_masks(
    conf: np.ndarray,
    is_cand: np.ndarray,
    age_pen: np.ndarray,
    viol: np.ndarray,
    kappa_s: float,
    lambda_contr: float,
    cur_mask: int,
) -> tuple[int, float]:
    """Exhaustive edge-toggle scan. Returns (argmax mask, objective).

    Ties resolve to the lowest mask; callers order toggle items by sorted edge
    key so the tie rule is lexicographic. Item arrays: per-item candidate
    confidence (1.0 slot when not a candidate), candidate flag, precomputed
    age penalty tau*exp(-xi*age) for non-candidate items, constraint slack.
    """
    k = int(conf.shape[0])
    if k > 24:
        raise ValueError("mask scan limited to 24 items")
    c = np.ascontiguousarray(conf, dtype=np.float64)
    ic = np.ascontiguousarray(is_cand, dtype=np.bool_)
    ap = np.ascontiguousarray(age_pen, dtype=np.float64)
    vl = np.ascontiguousarray(viol, dtype=np.float64)
    if HAS_NUMBA:
        return _scan_masks_nb(c, ic, ap, vl, float(kappa_s), float(lambda_contr), int(cur_mask))
    return _scan_masks_np(c, ic, ap, vl, float(kappa_s), float(lambda_contr), int(cur_mask))


def warmup() -> None:
    """Trigger JIT compilation so benchmarks measure steady state."""
    adj = np.zeros((3, 3), np.uint8)
    adj[0, 1] = adj[1, 0] = 1
    hop_counts(adj, 2)
    z = np.zeros(2)
    scan_masks(np.ones(2), np.ones(2, bool), z, z, 1.0, 1.0, 0)
