"""Numba vs numpy timings for the hot kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--quick]

Every kernel is called once per backend to warm the JIT cache, then timed
``repeat`` times; the table reports the best time and the max absolute
difference between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from aniso_acf import kernels
from aniso_acf.grid import Grid, SampledField
from aniso_acf.stencil import assemble_operator


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(quick):
    n = 64 if quick else 128
    rng = np.random.default_rng(42)

    # tridiagonal lowest eigenvalue (Sturm bisection + inverse iteration)
    m = 2048 if quick else 8192
    d = 2.0 + rng.random(m)
    e = -np.ones(m - 1)
    yield "tridiag_lowest", lambda b: kernels.tridiag_lowest_eigenvalue(d, e, backend=b)

    # batch of arc eigenvalues
    starts = np.linspace(0.0, np.pi, 16)
    lengths = np.full(16, 2.0)
    yield "arc_eigenvalues", lambda b: kernels.arc_eigenvalues(starts, lengths, 4.0, 512, backend=b)

    # stencil application and SOR on a 2D grid
    grid = Grid.unit_square(2 * n + 1)
    op = assemble_operator(np.array([[1.0, 0.3], [0.3, 4.0]]), grid)
    u0 = rng.random(grid.shape)
    yield "stencil_apply", lambda b: op.apply(u0, backend=b)

    f = np.zeros(grid.shape)
    c = np.zeros(grid.shape)

    def sor(b):
        u = u0.copy()
        op.sor(u, f, c, omega=1.8, sweeps=20, floor=0.0, backend=b)
        return u

    yield "sor_sweeps", sor

    # kernel-weighted ball integrals in 3D
    g3 = Grid.centered(0.92, 1 / (32 if quick else 64), 3)
    fld = SampledField.from_function(g3, lambda x: np.maximum(x[..., 0], 0.0))
    radii = np.linspace(0.2, 0.8, 13)
    deltas = np.maximum(2 * g3.h, radii / 32)
    yield "ball_integrals_3d", lambda b: kernels.ball_integrals(
        fld.values, g3.origin, g3.h, np.zeros(3), radii, deltas, np.array([1.0, 1.0, 4.0]), backend=b
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    print(f"{'kernel':<20} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>8} {'max diff':>10}")
    for name, fn in cases(args.quick):
        fn("numba")
        fn("numpy")
        t_nb, out_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np, out_np = best_of(lambda: fn("numpy"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_nb, dtype=float) - np.asarray(out_np, dtype=float))))
        print(f"{name:<20} {t_nb:11.4f} {t_np:11.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
