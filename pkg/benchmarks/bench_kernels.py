"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 3]

Prints wall time per call for each backend and the max difference between
their outputs.
"""

import argparse
import time

import numpy as np

from artifact import _fallback, kernels
from artifact.biot_savart import QuadratureConfig, _rho
from artifact.presets import canonical_field


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128, help="grid size per side")
    ap.add_argument("--targets", type=int, default=256, help="far-sum targets")
    ap.add_argument("--points", type=int, default=200_000, help="interpolation points")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    th = canonical_field(args.n)
    g = th.grid
    rng = np.random.default_rng(0)
    X1, X2 = g.mesh()
    w = g.cell_weights() * th.values
    nz = w != 0
    sy1, sy2, sq = X1[nz], X2[nz], w[nz]
    tx1 = rng.uniform(0, 1, args.targets)
    tx2 = rng.uniform(-1, 1, args.targets)
    rho = _rho(g, QuadratureConfig())
    p1 = rng.uniform(0, g.n1 - 1, args.points)
    p2 = rng.uniform(0, g.n2 - 1, args.points)

    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    rows = []
    if kernels.BACKEND == "cython":
        from artifact import _kernels as compiled
        impls = [("cython", compiled), ("numpy", _fallback)]
    else:
        impls = [("numpy", _fallback)]
    results = {}
    for name, impl in impls:
        t_far, far = best_of(lambda: kernels.far_sum(tx1, tx2, sy1, sy2, sq, 0.5, rho, impl=impl),
                             args.repeat)
        t_int, it = best_of(lambda: kernels.interp_cubic(th.values, p1, p2, impl=impl), args.repeat)
        results[name] = (far, it)
        rows.append((name, t_far, t_int))
    print(f"{'backend':<8} {'far_sum [s]':>12} {'interp [s]':>12}")
    for name, a, b in rows:
        print(f"{name:<8} {a:12.4f} {b:12.4f}")
    if len(rows) == 2:
        (fa, ia), (fb, ib) = results["cython"], results["numpy"]
        dfar = max(np.max(np.abs(fa[0] - fb[0])), np.max(np.abs(fa[1] - fb[1])))
        print(f"speedup far_sum x{rows[1][1] / rows[0][1]:.1f}, interp x{rows[1][2] / rows[0][2]:.1f}")
        print(f"max |diff| far_sum {dfar:.2e}, interp {np.max(np.abs(ia - ib)):.2e}")


if __name__ == "__main__":
    main()
