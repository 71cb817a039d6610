#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure-numpy fallbacks.

Runs the hot paths (pair-feature histograms, FPFH combination, brute-force
nearest neighbor) on point clouds of increasing size and prints a table of
per-call timings plus the speedup. Also cross-checks that both paths agree.

Usage: python benchmarks/bench_kernels.py [--points N ...] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np
from scipy.spatial import cKDTree

from stepkit.geometry import _kernels
from stepkit.geometry.registration import estimate_normals


def build_problem(n: int, radius: float, seed: int):
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.random((n, 3)) * 2.0
    normals = estimate_normals(pts, k=min(30, n))
    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=min(100, n - 1) + 1, distance_upper_bound=radius)
    dist, idx = dist[:, 1:], idx[:, 1:]
    valid = idx < n
    counts = valid.sum(axis=1).astype(np.int64)
    start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    return pts, normals, idx[valid].astype(np.int64), start, dist[valid]


def timed(fn, *args, repeat: int) -> tuple[float, np.ndarray]:
    fn(*args)  # warmup (and JIT compile for the numba path)
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, nargs="+", default=[512, 2048, 8192])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--radius", type=float, default=0.4)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba unavailable or disabled (STEPKIT_NO_NUMBA); "
              "only the numpy path can run.")
        return 1

    header = f"{'kernel':<16}{'n':>7}{'numba':>12}{'numpy':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for n in args.points:
        pts, normals, idx, start, dists = build_problem(n, args.radius, seed=7)

        t_nb, spfh_nb = timed(_kernels.spfh_histograms, pts, normals, idx, start,
                              repeat=args.repeat)
        t_np, spfh_np = timed(_kernels.spfh_histograms_numpy, pts, normals, idx,
                              start, repeat=args.repeat)
        assert np.allclose(spfh_nb, spfh_np, atol=1e-9), "spfh paths disagree"
        print(f"{'spfh':<16}{n:>7}{t_nb * 1e3:>10.2f}ms{t_np * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>8.1f}x")

        t_nb, f_nb = timed(_kernels.fpfh_from_spfh, spfh_nb, idx, start, dists,
                           repeat=args.repeat)
        t_np, f_np = timed(_kernels.fpfh_from_spfh_numpy, spfh_np, idx, start,
                           dists, repeat=args.repeat)
        assert np.allclose(f_nb, f_np, atol=1e-9), "fpfh paths disagree"
        print(f"{'fpfh combine':<16}{n:>7}{t_nb * 1e3:>10.2f}ms{t_np * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>8.1f}x")

        m = min(n, 2048)
        t_nb, d_nb = timed(_kernels.min_sqdist, pts[:m], pts[:m][::-1].copy(),
                           repeat=args.repeat)
        t_np, d_np = timed(_kernels.min_sqdist_numpy, pts[:m], pts[:m][::-1].copy(),
                           repeat=args.repeat)
        assert np.allclose(d_nb, d_np, atol=1e-12), "min_sqdist paths disagree"
        print(f"{'min sqdist':<16}{m:>7}{t_nb * 1e3:>10.2f}ms{t_np * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
