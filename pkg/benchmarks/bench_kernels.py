#!/usr/bin/env python3
"""Benchmark the numba kernel path against the pure-numpy fallback.

Runs every hot kernel on a representative workload with both
implementations, checks that they agree, and prints a timing table.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mobequity import kernels

M_PER_DEG = 111_194.9


def _trajectory(rng, n, span_m=400.0):
    deg = span_m / M_PER_DEG
    lats = 29.0 + rng.uniform(0, deg, n)
    lons = -95.0 + rng.uniform(0, deg, n)
    ts = np.cumsum(rng.uniform(60, 600, n))
    return lats, lons, ts


def _workloads(rng):
    lats, lons, ts = _trajectory(rng, 200_000)
    blats, blons = 29.0 + rng.uniform(0, 1, 1_000_000), -95.0 + rng.uniform(0, 1, 1_000_000)
    clats, clons, _ = _trajectory(rng, 120)
    dmat = kernels.implementations()["numpy"]["pairwise_distances"](clats, clons)
    ring_lat = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
    ring_lon = np.array([0.0, 1.0, 1.0, 0.0, 0.0])
    return {
        "haversine_to_point": ((blats, blons, 29.5, -94.5), None),
        "pairwise_distances": ((clats, clons), None),
        "staypoint_spans": ((lats, lons, ts, 50.0, 900.0), None),
        "complete_linkage_labels": ((dmat, 50.0), None),
        "ring_hits": ((ring_lat, ring_lon, 0.5, 0.5), 20_000),
    }


def _time(fn, args, loops):
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        if loops:
            for _ in range(loops):
                fn(*args)
        else:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _agree(a, b):
    if isinstance(a, np.ndarray):
        if a.dtype.kind in "iu":
            return np.array_equal(a, b)
        return np.allclose(a, b, rtol=1e-12, atol=1e-9)
    return abs(a - b) <= 1e-9


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    impls = kernels.implementations()
    if impls["numba"] is None:
        print("numba is not importable; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    workloads = _workloads(rng)

    # compile outside the timed region
    for name, (wargs, _) in workloads.items():
        impls["numba"][name](*wargs)

    print(f"{'kernel':<26} {'numba':>10} {'numpy':>10} {'speedup':>9}  agree")
    for name, (wargs, loops) in workloads.items():
        out_nb = impls["numba"][name](*wargs)
        out_np = impls["numpy"][name](*wargs)
        ok = _agree(out_nb, out_np)
        t_nb = _time(impls["numba"][name], wargs, loops)
        t_np = _time(impls["numpy"][name], wargs, loops)
        print(
            f"{name:<26} {t_nb * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms "
            f"{t_np / t_nb:>8.1f}x  {'yes' if ok else 'NO'}"
        )
        if not ok:
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
