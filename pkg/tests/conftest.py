import numpy as np
import pytest


def bfs_hop_count(adj, start, h):
    """Brute-force BFS: vertices within <= h hops of start, start excluded."""
    n = adj.shape[0]
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            if dist[u] >= h:
                continue
            for v in range(n):
                if adj[u, v] and v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return len(dist) - 1


def coverage_bruteforce(adj, kappa, h):
    n = adj.shape[0]
    return sum(1.0 - (1.0 - kappa) ** bfs_hop_count(adj, v, h) for v in range(n))


def adj_from_mask(n, mask):
    """Graph on n vertices from an edge bitmask over the C(n,2) pairs in
    lexicographic order."""
    adj = np.zeros((n, n), np.uint8)
    bit = 0
    for i in range(n):
        for j in range(i + 1, n):
            if (mask >> bit) & 1:
                adj[i, j] = adj[j, i] = 1
            bit += 1
    return adj


def pair_count(n):
    return n * (n - 1) // 2


@pytest.fixture
def rng():
    return np.random.default_rng(20260821)
