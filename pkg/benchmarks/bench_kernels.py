"""Timing comparison of the jit and plain-numpy kernel backends.

Runs each kernel under KGR_NUMBA=1 and KGR_NUMBA=0 in separate
interpreters (the backend is chosen at import time) and prints a table.

Usage: python3 benchmarks/bench_kernels.py [--reps N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench_this(reps: int) -> dict:
    from kgrenv import kernels

    kernels.warmup()
    rng = np.random.default_rng(7)
    results = {}

    n = 120
    upper = np.triu((rng.random((n, n)) < 0.05).astype(np.uint8), 1)
    adj = upper + upper.T
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        kernels.hop_counts(adj, 3)
        times.append(time.perf_counter() - t0)
    results["hop_counts n=120 h=3"] = min(times)

    n = 260
    upper = np.triu((rng.random((n, n)) < 0.02).astype(np.uint8), 1)
    adj = upper + upper.T
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        kernels.coverage_value(adj, 0.5, 2)
        times.append(time.perf_counter() - t0)
    results["coverage n=260 h=2"] = min(times)

    k = 18
    conf = rng.uniform(0.3, 1.0, k)
    is_cand = rng.random(k) < 0.6
    age_pen = np.where(is_cand, 0.0, rng.uniform(0.0, 0.1, k))
    viol = (rng.random(k) < 0.2).astype(np.float64)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        kernels.scan_masks(conf, is_cand, age_pen, viol, 1.0, 0.1, 0)
        times.append(time.perf_counter() - t0)
    results["scan_masks k=18"] = min(times)

    return {"has_numba": kernels.HAS_NUMBA, "results": results}


def run_backend(flag: str, reps: int) -> dict:
    env = dict(os.environ, KGR_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--this", "--reps", str(reps)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--this", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.this:
        print(json.dumps(bench_this(args.reps)))
        return 0

    jit = run_backend("1", args.reps)
    plain = run_backend("0", args.reps)
    if not jit["has_numba"]:
        print("note: numba unavailable; both columns run the numpy backend")
    if plain["has_numba"]:
        print("warning: KGR_NUMBA=0 did not disable the jit backend")

    name_w = max(len(k) for k in jit["results"])
    print(f"{'kernel':<{name_w}}  {'jit':>10}  {'numpy':>10}  {'speedup':>8}")
    for name in jit["results"]:
        a = jit["results"][name]
        b = plain["results"][name]
        print(
            f"{name:<{name_w}}  {a * 1e3:>8.2f}ms  {b * 1e3:>8.2f}ms  "
            f"{b / a:>7.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
