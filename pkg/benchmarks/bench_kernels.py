#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-NumPy kernels.

The banded LDL^T factor/solve dominate a production ladder run (one
factorization plus ~100 solves per rung), so this is the number that decides
whether the extension is worth building on a given box.

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from wgspec._kernels import implementations, jacobi_eigh, ldlt_factor, ldlt_solve
from wgspec.stripgrid import StripGrid, assemble_limiting, square_well


def banded_problem(h, X):
    grid = StripGrid.build(np.pi, h, X)
    op = assemble_limiting(grid, square_well(-0.6768, a=1.0))
    ab = op.band.copy()
    ab[:, 0] -= 0.9  # indefinite shift, like a ceiling factorization
    return grid, ab


def time_call(fn, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(quick=False):
    impls = implementations()
    print(f"available kernels: {', '.join(impls)}\n")

    cases = [(0.1, 14.0)] if quick else [(0.2, 14.0), (0.1, 20.0), (0.05, 31.0)]
    print("banded LDL^T (factor once, solve 10 RHS)")
    print(f"{'grid':>16} {'n':>7} {'bw':>4} " +
          " ".join(f"{name + ' fact':>14} {name + ' solve':>14}" for name in impls))
    for h, X in cases:
        grid, ab = banded_problem(h, X)
        row = f"{f'{grid.Nx}x{grid.Ny}':>16} {grid.n:>7} {grid.Ny:>4} "
        rhs = np.random.default_rng(0).standard_normal((grid.n, 10))
        for name in impls:
            t_fact, (fac, inertia, bad) = time_call(
                lambda name=name: ldlt_factor(ab.copy(), impl=name),
                repeats=1 if name == "python" else 3)
            assert bad == -1
            t_solve, _ = time_call(lambda name=name, fac=fac: ldlt_solve(
                fac, rhs, impl=name), repeats=1 if name == "python" else 3)
            row += f"{t_fact:>13.3f}s {t_solve:>13.3f}s"
        print(row)

    sizes = [200] if quick else [200, 500, 900]
    print("\ncyclic Jacobi eigendecomposition")
    print(f"{'n':>7} " + " ".join(f"{name:>14}" for name in impls))
    rng = np.random.default_rng(1)
    for n in sizes:
        M = rng.standard_normal((n, n))
        M = (M + M.T) / 2
        row = f"{n:>7} "
        for name in impls:
            t, _ = time_call(lambda name=name: jacobi_eigh(M, impl=name), repeats=1)
            row += f"{t:>13.3f}s"
        print(row)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="one small case only")
    run(**vars(parser.parse_args()))
