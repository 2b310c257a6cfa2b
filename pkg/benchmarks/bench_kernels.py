#!/usr/bin/env python3
"""Side-by-side timing of the numba JIT kernels vs the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py [--repeats N]

Informs the `auto` backend policy in metalgraph.kernels: the loop-bound
kernels win under numba, while the convolutions are faster through the
BLAS-backed numpy path.
"""

import argparse
import time

import numpy as np

from metalgraph.kernels import _numba_impl as nb
from metalgraph.kernels import _numpy_impl as npy


def timeit(fn, *args, repeats=10):
    fn(*args)  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=10)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    cases = []

    segs = rng.integers(0, 64, size=(5000, 4)).astype(np.int64)
    cases.append(("accumulate_lines 5k segs/64px", (segs, 64, 64),
                  npy.accumulate_lines, nb.accumulate_lines))

    metal = np.argwhere(rng.random((64, 64)) < 0.02).astype(np.int64)
    cases.append(("nearest_offsets 64x64", (np.ascontiguousarray(metal), 64, 64),
                  npy.nearest_offsets, nb.nearest_offsets))

    theta = rng.uniform(-np.pi, np.pi, 1024)
    rad = rng.uniform(0, 32, 1024)
    cases.append(("topk_edges n=1024 k=12+4", (theta, rad, 12, 4, 2.0),
                  npy.topk_edges, nb.topk_edges))

    img = rng.random((64, 64))
    ang = np.linspace(0, np.pi, 90, endpoint=False)
    cases.append(("radon 64px/90ang", (img, np.cos(ang), np.sin(ang), 95, 0.5),
                  npy.radon_fwd, nb.radon_fwd))

    filt = rng.random((90, 95))
    cases.append(("backproject 64px/90ang", (filt, np.cos(ang), np.sin(ang), 64, 64),
                  npy.backproject, nb.backproject))

    src = rng.integers(0, 1024, 16384).astype(np.int64)
    dst = rng.integers(0, 1024, 16384).astype(np.int64)
    w = rng.random(16384)
    x = rng.random((1024, 16)).astype(np.float32)
    cases.append(("spmm 16k nnz x 16ch", (src, dst, w, x), npy.spmm, nb.spmm))

    xc = rng.standard_normal((4, 16, 34, 34)).astype(np.float32)
    wc = rng.standard_normal((16, 16, 3, 3)).astype(np.float32)
    bc = np.zeros(16, np.float32)
    cases.append(("conv2d_fwd 4x16x32x32 3x3", (xc, wc, bc, 1, 32, 32),
                  npy.conv2d_fwd, nb.conv2d_fwd))

    gy = rng.standard_normal((4, 16, 32, 32)).astype(np.float32)
    cases.append(("conv2d_bwd_w (same shape)", (xc, gy, 3, 3, 1),
                  npy.conv2d_bwd_w, nb.conv2d_bwd_w))
    cases.append(("conv2d_bwd_x (same shape)", (gy, wc, 1, 34, 34),
                  npy.conv2d_bwd_x, nb.conv2d_bwd_x))

    print(f"{'kernel':<28} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for name, a, f_np, f_nb in cases:
        t_np = timeit(f_np, *a, repeats=args.repeats)
        t_nb = timeit(f_nb, *a, repeats=args.repeats)
        print(f"{name:<28} {t_np:>12.2f} {t_nb:>12.2f} {t_np / t_nb:>8.1f}x")
    print("\n(speedup > 1 means the numba path is faster; the `auto` backend "
          "uses numba for the loop-bound kernels and the BLAS-backed numpy "
          "path for conv2d)")


if __name__ == "__main__":
    main()
