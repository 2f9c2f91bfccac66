"""Compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--points N]
"""
import argparse
import time

import numpy as np

from chordarc._backend import backend
from chordarc.geometry import segment_curve
from chordarc.modulus import PowerModulus, builtin_boundary
from chordarc.extension import PseudoharmonicExtension


def timed(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=20)
    args = ap.parse_args()
    curve = segment_curve()
    bd = builtin_boundary(curve, "abs_sqrt")
    rng = np.random.default_rng(0)
    pts = rng.uniform([-1.2, 0.05, -0.3], [1.2, 0.6, 0.3], size=(args.points, 3))
    exts = {name: PseudoharmonicExtension(curve, bd, PowerModulus(0.5), impl=backend(name))
            for name in ("compiled", "python")}
    print(f"{'field':6s} {'compiled us':>12s} {'python us':>12s} {'speedup':>8s} {'max diff':>10s}")
    for what in ("dist", "g", "g1", "d2", "d0", "f0"):
        tc, vc = timed(lambda: exts["compiled"].kernel.eval(pts, what))
        tp, vp = timed(lambda: exts["python"].kernel.eval(pts, what), repeat=1)
        n = len(pts)
        print(f"{what:6s} {tc / n * 1e6:12.2f} {tp / n * 1e6:12.2f} {tp / tc:8.1f} {np.abs(vc - vp).max():10.2e}")
    src = rng.uniform(-1, 1, size=(2000, 3))
    tgt = rng.uniform(2, 3, size=(200, 3))
    sizes = np.full(len(src), 0.01)
    dens = rng.uniform(size=len(src))
    for name in ("compiled", "python"):
        t, _ = timed(lambda: backend(name).cell_potential(src, sizes, dens, tgt, 0.3))
        print(f"cell_potential {name:8s} {t * 1e3:8.2f} ms")


if __name__ == "__main__":
    main()
