"""Benchmark the overlap pair-counting kernel: numba jit vs pure numpy.

Run both paths in one process (the env flag only picks the default used by
the engine; here we import both implementations directly).

    python3 benchmarks/bench_overlap.py [--size 512] [--frames 50]
"""

import argparse
import time

import numpy as np

from mopteval._kernels import _pair_counts_np
from mopteval.core import encode_identity

try:
    from numba import njit

    @njit(cache=True)
    def _pair_counts_jit(p_inv, g_inv, n_gt, size):
        counts = np.zeros(size, dtype=np.int64)
        for i in range(p_inv.size):
            counts[p_inv[i] * n_gt + g_inv[i]] += 1
        return counts

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def random_frame_codes(rng, n, n_classes=8, n_tracks=4):
    classes = rng.integers(0, n_classes, size=n)
    tracks = rng.integers(0, n_tracks, size=n)
    return encode_identity(classes, tracks)


def bench(fn, pairs, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for p_inv, g_inv, n_p, n_g in pairs:
            fn(p_inv, g_inv, n_p, n_g)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=512, help="frame side length")
    ap.add_argument("--frames", type=int, default=50)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n = args.size * args.size
    pairs = []
    for _ in range(args.frames):
        p = random_frame_codes(rng, n)
        g = random_frame_codes(rng, n)
        _, p_inv = np.unique(p, return_inverse=True)
        _, g_inv = np.unique(g, return_inverse=True)
        pairs.append((p_inv.astype(np.int64), g_inv.astype(np.int64),
                      int(p_inv.max()) + 1, int(g_inv.max()) + 1))

    t_np = bench(_pair_counts_np, pairs)
    print(f"numpy bincount : {t_np * 1e3:8.1f} ms for {args.frames} frames of {args.size}^2")

    if HAVE_NUMBA:
        jit_fn = lambda p, g, np_, ng: _pair_counts_jit(p, g, ng, np_ * ng)
        jit_fn(*pairs[0][:2], pairs[0][2], pairs[0][3])  # compile
        t_jit = bench(jit_fn, pairs)
        print(f"numba jit loop : {t_jit * 1e3:8.1f} ms  (speedup x{t_np / t_jit:.2f})")
    else:
        print("numba not installed; jit path skipped")


if __name__ == "__main__":
    main()
