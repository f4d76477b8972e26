#!/usr/bin/env python3
"""Benchmark the compiled block-matmul kernel against the numpy fallback.

Times the raw tile kernels on representative DBMM shapes from the
published model grid, then one end-to-end simulated forward pass per
backend. Results are wall-clock medians; functional agreement between
the backends is checked as it goes.

Usage: python3 benchmarks/kernel_bench.py [--repeats N]
"""

import argparse
import importlib
import statistics
import time

import numpy as np

import vtr._kernels_py as kpy
from vtr.matrix import BlockOrder, to_blocked

try:
    import vtr._kernels as kcy
except ImportError:
    kcy = None

# (rows, inner, cols, block): embedding, QKV 122x88, MLP1, attention, big MLP
SHAPES = [
    (121, 320, 44, 16),
    (122, 88, 88, 16),
    (122, 88, 352, 16),
    (122, 122, 88, 16),
    (257, 384, 96, 16),
    (257, 96, 96, 32),
]


def time_kernel(fn, a4, wt4, out_shape, repeats):
    times = []
    for _ in range(repeats):
        out4 = np.zeros(out_shape, dtype=np.float32)
        t0 = time.perf_counter()
        fn(a4, wt4, out4)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out4


def bench_tiles(repeats):
    rng = np.random.default_rng(0)
    print(f"{'shape':<22} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'GMAC/s':>8}")
    for rows, inner, cols, b in SHAPES:
        a = rng.standard_normal((rows, inner)).astype(np.float32)
        w = rng.standard_normal((inner, cols)).astype(np.float32)
        ab = to_blocked(a, b, BlockOrder.ROW_MAJOR)
        wb = to_blocked(w, b, BlockOrder.COL_MAJOR)
        a4 = ab.blocks.reshape(ab.row_blocks, ab.col_blocks, b, b)
        wt4 = wb.blocks.reshape(wb.col_blocks, wb.row_blocks, b, b)
        out_shape = (ab.row_blocks, wb.col_blocks, b, b)
        t_py, out_py = time_kernel(kpy.dbmm_blocks, a4, wt4, out_shape, repeats)
        label = f"{rows}x{inner}x{cols} b={b}"
        macs = ab.padded_rows * wb.padded_cols * ab.padded_cols
        if kcy is None:
            print(f"{label:<22} {t_py * 1e3:>10.3f} {'n/a':>10} {'n/a':>8} "
                  f"{macs / t_py / 1e9:>8.2f}")
            continue
        t_cy, out_cy = time_kernel(kcy.dbmm_blocks, a4, wt4, out_shape, repeats)
        err = np.abs(out_cy - out_py).max() / max(np.abs(out_py).max(), 1e-30)
        assert err < 1e-5, f"backends disagree on {label}: {err}"
        print(f"{label:<22} {t_py * 1e3:>10.3f} {t_cy * 1e3:>10.3f} "
              f"{t_py / t_cy:>8.2f} {macs / t_cy / 1e9:>8.2f}")


def bench_forward(repeats):
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np\n"
        "from vtr.model import VtrConfig, forward\n"
        "from vtr.weights_io import random_init\n"
        "from vtr.accel import simulate_forward\n"
        "from vtr import kernels\n"
        "cfg = VtrConfig(88, 88, 1, 8, 4, 2, 88, 12, 4, 4, 10)\n"
        "w = random_init(cfg, 1)\n"
        "img = np.random.default_rng(0).random((88, 88, 1), dtype=np.float32)\n"
        "simulate_forward(img, w, cfg)\n"
        f"ts = []\n"
        f"for _ in range({repeats}):\n"
        "    t0 = time.perf_counter(); simulate_forward(img, w, cfg)\n"
        "    ts.append(time.perf_counter() - t0)\n"
        "print(kernels.BACKEND, sorted(ts)[len(ts)//2])\n"
    )
    print("\nsimulated forward, best published geometry (patch 8, dim 88, depth 12):")
    for backend in ("cython", "python"):
        env = dict(os.environ, VTR_KERNELS=backend)
        proc = subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"  {backend}: unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        name, median = proc.stdout.split()
        print(f"  {name}: median {float(median) * 1e3:.1f} ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if kcy is None:
        print("compiled kernel not importable; timing fallback only")
    bench_tiles(args.repeats)
    bench_forward(args.repeats)


if __name__ == "__main__":
    main()
